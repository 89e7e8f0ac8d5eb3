#pragma once

#include <cmath>
#include <span>
#include <string>

#include "tartekit/error.hpp"

namespace tartekit {

// Yeo-Johnson transform of x for a given lambda.
template <typename Scalar>
Scalar yeo_johnson(Scalar x, Scalar lambda) {
  constexpr Scalar kTiny = Scalar(1e-12);
  if (x >= Scalar(0)) {
    const Scalar l = std::log1p(x);
    if (std::abs(lambda) < kTiny) return l;
    return std::expm1(lambda * l) / lambda;
  }
  const Scalar l = std::log1p(-x);
  const Scalar mu = Scalar(2) - lambda;
  if (std::abs(mu) < kTiny) return -l;
  return -std::expm1(mu * l) / mu;
}

// Inverse of yeo_johnson in its first argument.
template <typename Scalar>
Scalar yeo_johnson_inverse(Scalar y, Scalar lambda) {
  constexpr Scalar kTiny = Scalar(1e-12);
  if (y >= Scalar(0)) {
    if (std::abs(lambda) < kTiny) return std::expm1(y);
    return std::expm1(std::log1p(lambda * y) / lambda);
  }
  const Scalar mu = Scalar(2) - lambda;
  if (std::abs(mu) < kTiny) return -std::expm1(-y);
  return -std::expm1(std::log1p(-mu * y) / mu);
}

// Profile log-likelihood of lambda under a normal model of the transformed
// sample (up to an additive constant).
double yeo_johnson_log_likelihood(std::span<const double> values, double lambda);

struct PowerTransform {
  std::string relation;
  double lambda = 1.0;
  double mean = 0.0;
  double std = 1.0;

  static PowerTransform identity(std::string relation) { return {std::move(relation), 1.0, 0.0, 1.0}; }
};

inline constexpr double kLambdaLower = -5.0;
inline constexpr double kLambdaUpper = 5.0;

// Maximum-likelihood lambda on [-5, 5] by golden-section search, followed by
// standardization statistics of the transformed values. Throws
// DegenerateInput when fewer than two distinct finite values are given.
PowerTransform fit_power_transform(std::span<const double> values, const std::string& relation,
                                   double tolerance = 1e-6);

inline double apply_power_transform(const PowerTransform& t, double x) {
  return (yeo_johnson(x, t.lambda) - t.mean) / t.std;
}

inline double invert_power_transform(const PowerTransform& t, double z) {
  return yeo_johnson_inverse(z * t.std + t.mean, t.lambda);
}

}  // namespace tartekit
