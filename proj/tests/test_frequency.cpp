#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stars/error.hpp"
#include "stars/frequency.hpp"
#include "stars/rng.hpp"

using namespace stars;

namespace {

MotionSequence random_sequence(Rng& rng, int64_t frames, int64_t joints) {
  MotionSequence s = MotionSequence::zeros(frames, joints);
  for (double& v : s.xyz) v = rng.uniform(-1.0, 1.0);
  return s;
}

MotionSequence sinusoid(int64_t frames, int64_t joints) {
  MotionSequence s = MotionSequence::zeros(frames, joints);
  for (int64_t t = 0; t < frames; ++t) {
    for (int64_t v = 0; v < joints; ++v) {
      for (int64_t c = 0; c < 3; ++c) {
        s.at(t, v, c) = std::sin(0.35 * static_cast<double>(t) + 0.5 * static_cast<double>(v) +
                                 0.25 * static_cast<double>(c));
      }
    }
  }
  return s;
}

double reconstruction_error(const MotionSequence& original, int64_t m) {
  const DctBasis basis = build_dct_basis(m, original.frames);
  const Tensor coeffs = to_frequency(basis, original);
  auto [head, tail] = to_time(basis, coeffs, original.frames, 0);
  return sequence_distance_l2(head, original);
}

}  // namespace

TEST_CASE("closed-form 2x2 basis") {
  const DctBasis b = build_dct_basis(2, 2);
  CHECK(b.at(0, 0) == doctest::Approx(0.70711).epsilon(1e-5));
  CHECK(b.at(0, 1) == doctest::Approx(0.70711).epsilon(1e-5));
  CHECK(b.at(1, 0) == doctest::Approx(0.70711).epsilon(1e-5));
  CHECK(b.at(1, 1) == doctest::Approx(-0.70711).epsilon(1e-5));
}

TEST_CASE("single-point basis") {
  const DctBasis b = build_dct_basis(1, 1);
  CHECK(b.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rows are orthonormal for any M, T") {
  for (auto [m, t] : {std::pair<int64_t, int64_t>{2, 2}, {3, 7}, {8, 8}, {5, 24}, {20, 125}}) {
    const DctBasis b = build_dct_basis(m, t);
    for (int64_t r1 = 0; r1 < m; ++r1) {
      for (int64_t r2 = 0; r2 < m; ++r2) {
        double dot = 0.0;
        for (int64_t c = 0; c < t; ++c) dot += b.at(r1, c) * b.at(r2, c);
        CHECK(std::abs(dot - (r1 == r2 ? 1.0 : 0.0)) < 1e-10);
      }
    }
  }
}

TEST_CASE("basis parameter errors") {
  CHECK_THROWS_AS(build_dct_basis(0, 4), ParameterError);
  CHECK_THROWS_AS(build_dct_basis(5, 4), ParameterError);
}

TEST_CASE("pad_history replicates the last pose") {
  MotionSequence h = MotionSequence::zeros(2, 1);
  h.at(0, 0, 0) = 1.0;
  h.at(1, 0, 0) = 2.0;
  const MotionSequence padded = pad_history(h, 2);
  CHECK(padded.frames == 4);
  CHECK(padded.at(0, 0, 0) == 1.0);
  CHECK(padded.at(1, 0, 0) == 2.0);
  CHECK(padded.at(2, 0, 0) == 2.0);
  CHECK(padded.at(3, 0, 0) == 2.0);

  const MotionSequence unpadded = pad_history(h, 0);
  CHECK(unpadded.same_values(h));

  MotionSequence constant = MotionSequence::zeros(3, 2);
  for (double& v : constant.xyz) v = 0.7;
  const MotionSequence still = pad_history(constant, 4);
  for (double v : still.xyz) CHECK(v == 0.7);

  CHECK_THROWS_AS(pad_history(MotionSequence::zeros(0, 1), 2), ParameterError);
}

TEST_CASE("constant sequences load only the first coefficient") {
  const int64_t t = 6;
  MotionSequence s = MotionSequence::zeros(t, 2);
  for (double& v : s.xyz) v = 0.8;
  const DctBasis basis = build_dct_basis(t, t);
  const Tensor coeffs = to_frequency(basis, s);
  const double expected = 0.8 * std::sqrt(static_cast<double>(t));
  for (int64_t v = 0; v < 2; ++v) {
    for (int64_t c = 0; c < 3; ++c) {
      CHECK(coeffs.at({0, v, c}) == doctest::Approx(expected).epsilon(1e-12));
      for (int64_t m = 1; m < t; ++m) {
        CHECK(std::abs(coeffs.at({m, v, c})) < 1e-12);
      }
    }
  }
}

TEST_CASE("zero sequences give zero coefficients") {
  const DctBasis basis = build_dct_basis(4, 8);
  const Tensor coeffs = to_frequency(basis, MotionSequence::zeros(8, 3));
  for (double v : coeffs.values()) CHECK(v == 0.0);
  auto [h, f] = to_time(basis, Tensor::zeros({4, 3, 3}), 5, 3);
  for (double v : h.xyz) CHECK(v == 0.0);
  for (double v : f.xyz) CHECK(v == 0.0);
}

TEST_CASE("full-basis round trip is exact to 1e-9") {
  Rng rng(3);
  const MotionSequence history = random_sequence(rng, 5, 4);
  const MotionSequence padded = pad_history(history, 7);
  const DctBasis basis = build_dct_basis(12, 12);
  const Tensor coeffs = to_frequency(basis, padded);
  auto [recovered, future] = to_time(basis, coeffs, 5, 7);
  for (int64_t t = 0; t < 5; ++t) {
    for (int64_t v = 0; v < 4; ++v) {
      for (int64_t c = 0; c < 3; ++c) {
        CHECK(std::abs(recovered.at(t, v, c) - padded.at(t, v, c)) < 1e-9);
      }
    }
  }
  for (int64_t t = 0; t < 7; ++t) {
    for (int64_t v = 0; v < 4; ++v) {
      for (int64_t c = 0; c < 3; ++c) {
        CHECK(std::abs(future.at(t, v, c) - padded.at(5 + t, v, c)) < 1e-9);
      }
    }
  }
}

TEST_CASE("truncation error is monotone non-increasing in M") {
  const MotionSequence s = sinusoid(16, 2);
  double prev = std::numeric_limits<double>::infinity();
  for (int64_t m : {2, 4, 8, 16}) {
    const double err = reconstruction_error(s, m);
    CHECK(err <= prev + 1e-12);
    prev = err;
  }
  CHECK(reconstruction_error(s, 16) < 1e-9);
}

TEST_CASE("Parseval: coefficient energy bounded by series energy") {
  Rng rng(11);
  for (int64_t m : {2, 5, 9, 12}) {
    const MotionSequence s = random_sequence(rng, 12, 3);
    const DctBasis basis = build_dct_basis(m, 12);
    const Tensor coeffs = to_frequency(basis, s);
    double energy_c = 0.0;
    for (double v : coeffs.values()) energy_c += v * v;
    double energy_s = 0.0;
    for (double v : s.xyz) energy_s += v * v;
    CHECK(energy_c <= energy_s * (1.0 + 1e-12));
    if (m == 12) {
      CHECK(energy_c == doctest::Approx(energy_s).epsilon(1e-9));
    }
  }
}

TEST_CASE("length mismatch and bad splits are rejected") {
  const DctBasis basis = build_dct_basis(4, 8);
  CHECK_THROWS_AS(to_frequency(basis, MotionSequence::zeros(6, 2)), ContractError);
  CHECK_THROWS_AS(to_time(basis, Tensor::zeros({4, 2, 3}), 6, 3), ParameterError);
}
