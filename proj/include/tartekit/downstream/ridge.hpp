#pragma once

#include <vector>

#include "tartekit/numerics/tensor.hpp"

namespace tartekit {

using VectorXd = Eigen::VectorXd;

inline const std::vector<double> kDefaultAlphas{1e-2, 1e-1, 1.0, 1e1, 1e2};

// Ridge on standardized features with an unpenalized intercept.
struct RidgeModel {
  VectorXd feature_mean;
  VectorXd feature_scale;  // 1 where a feature is constant
  VectorXd weights;        // in standardized units
  double intercept = 0.0;
  double alpha = 1.0;
  std::vector<double> alphas;
  std::vector<double> loo_mse;  // per alpha, same order as alphas

  VectorXd predict(const MatrixXd& X) const;
  // Weights mapped back to raw feature units.
  VectorXd raw_weights() const { return weights.cwiseQuotient(feature_scale); }
};

// Leave-one-out residuals y_i - yhat_(-i) for every alpha, from one thin SVD
// via e_i = r_i / (1 - h_ii). Standardization statistics come from all rows.
MatrixXd loo_residuals(const MatrixXd& X, const VectorXd& y, const std::vector<double>& alphas);

// Picks the alpha with the smallest LOO mean squared error (first on ties)
// and refits on all rows.
RidgeModel fit_ridge_loocv(const MatrixXd& X, const VectorXd& y, const std::vector<double>& alphas = kDefaultAlphas);

inline VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace tartekit
