#include "tartekit/embed/power_transform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

namespace tartekit {

double yeo_johnson_log_likelihood(std::span<const double> values, double lambda) {
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  std::vector<double> psi(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    psi[i] = yeo_johnson(values[i], lambda);
    mean += psi[i];
  }
  mean /= n;
  double var = 0.0;
  for (double p : psi) var += (p - mean) * (p - mean);
  var /= n;
  if (!std::isfinite(var) || var <= 0.0) return -std::numeric_limits<double>::infinity();
  double jacobian = 0.0;
  for (double x : values) jacobian += std::copysign(1.0, x) * std::log1p(std::abs(x));
  return -0.5 * n * std::log(var) + (lambda - 1.0) * jacobian;
}

PowerTransform fit_power_transform(std::span<const double> values, const std::string& relation,
                                   double tolerance) {
  std::set<double> distinct;
  for (double v : values) {
    if (!std::isfinite(v)) throw InvalidArgument("fit_power_transform: non-finite value for '" + relation + "'");
    distinct.insert(v);
    if (distinct.size() >= 2) break;
  }
  if (distinct.size() < 2) {
    throw DegenerateInput("fit_power_transform: relation '" + relation + "' needs two distinct values");
  }

  // Golden-section search for the maximum of a unimodal profile.
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = kLambdaLower;
  double hi = kLambdaUpper;
  double a = hi - inv_phi * (hi - lo);
  double b = lo + inv_phi * (hi - lo);
  double fa = yeo_johnson_log_likelihood(values, a);
  double fb = yeo_johnson_log_likelihood(values, b);
  while (hi - lo > tolerance) {
    if (fa < fb) {
      lo = a;
      a = b;
      fa = fb;
      b = lo + inv_phi * (hi - lo);
      fb = yeo_johnson_log_likelihood(values, b);
    } else {
      hi = b;
      b = a;
      fb = fa;
      a = hi - inv_phi * (hi - lo);
      fa = yeo_johnson_log_likelihood(values, a);
    }
  }

  PowerTransform t;
  t.relation = relation;
  t.lambda = 0.5 * (lo + hi);
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += yeo_johnson(v, t.lambda);
  mean /= n;
  double var = 0.0;
  for (double v : values) {
    const double d = yeo_johnson(v, t.lambda) - mean;
    var += d * d;
  }
  var /= n;
  t.mean = mean;
  t.std = std::sqrt(var);
  if (!(t.std > 0.0) || !std::isfinite(t.std)) {
    throw DegenerateInput("fit_power_transform: transformed values of '" + relation + "' have no spread");
  }
  return t;
}

}  // namespace tartekit
