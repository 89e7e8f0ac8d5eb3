#include "tartekit/downstream/ridge.hpp"

namespace tartekit {

namespace {

struct Standardized {
  Eigen::MatrixXd Z;  // column-major works best with the SVD
  VectorXd mean;
  VectorXd scale;
  VectorXd yc;
  double y_mean = 0.0;
};

Standardized standardize(const MatrixXd& X, const VectorXd& y) {
  if (X.rows() != y.size()) {
    throw DimensionError("ridge: X has " + std::to_string(X.rows()) + " rows but y has " + std::to_string(y.size()));
  }
  if (X.rows() < 3) throw InvalidArgument("ridge: at least 3 rows are needed for leave-one-out selection");
  if (!X.allFinite() || !y.allFinite()) throw NumericError("ridge: non-finite input");
  Standardized s;
  const double n = static_cast<double>(X.rows());
  s.mean = X.colwise().mean().transpose();
  s.Z = X.rowwise() - s.mean.transpose();
  s.scale = (s.Z.colwise().squaredNorm() / n).cwiseSqrt().transpose();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
    if (!(s.scale[j] > 1e-12 * (1.0 + std::abs(s.mean[j])))) s.scale[j] = 1.0;
  }
  s.Z = s.Z.array().rowwise() / s.scale.transpose().array();
  s.y_mean = y.mean();
  s.yc = y.array() - s.y_mean;
  return s;
}

void check_alphas(const std::vector<double>& alphas) {
  if (alphas.empty()) throw InvalidArgument("ridge: empty alpha grid");
  for (double a : alphas) {
    if (!(a > 0.0) || !std::isfinite(a)) throw InvalidArgument("ridge: alphas must be positive and finite");
  }
}

}  // namespace

VectorXd RidgeModel::predict(const MatrixXd& X) const {
  if (X.cols() != weights.size()) {
    throw DimensionError("ridge: model expects " + std::to_string(weights.size()) + " features, got " +
                         std::to_string(X.cols()));
  }
  const Eigen::MatrixXd Z = (X.rowwise() - feature_mean.transpose()).array().rowwise() /
                            feature_scale.transpose().array();
  return (Z * weights).array() + intercept;
}

MatrixXd loo_residuals(const MatrixXd& X, const VectorXd& y, const std::vector<double>& alphas) {
  check_alphas(alphas);
  const Standardized s = standardize(X, y);
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(s.Z, Eigen::ComputeThinU);
  const Eigen::MatrixXd& U = svd.matrixU();
  const VectorXd sv2 = svd.singularValues().cwiseAbs2();
  const VectorXd uty = U.transpose() * s.yc;
  const Eigen::MatrixXd U2 = U.cwiseAbs2();
  const double inv_n = 1.0 / static_cast<double>(X.rows());

  MatrixXd out(X.rows(), static_cast<Eigen::Index>(alphas.size()));
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    const VectorXd shrink = sv2.array() / (sv2.array() + alphas[a]);
    const VectorXd fitted = U * shrink.cwiseProduct(uty);  // centered fit
    const VectorXd h = (U2 * shrink).array() + inv_n;
    out.col(static_cast<Eigen::Index>(a)) = (s.yc - fitted).array() / (1.0 - h.array());
  }
  return out;
}

RidgeModel fit_ridge_loocv(const MatrixXd& X, const VectorXd& y, const std::vector<double>& alphas) {
  const MatrixXd e = loo_residuals(X, y, alphas);
  RidgeModel m;
  m.alphas = alphas;
  std::size_t best = 0;
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    m.loo_mse.push_back(e.col(static_cast<Eigen::Index>(a)).squaredNorm() / static_cast<double>(e.rows()));
    if (m.loo_mse[a] < m.loo_mse[best]) best = a;
  }
  m.alpha = alphas[best];

  const Standardized s = standardize(X, y);
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(s.Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd sv = svd.singularValues();
  const VectorXd factor = sv.array() / (sv.array().square() + m.alpha);
  m.weights = svd.matrixV() * factor.cwiseProduct(svd.matrixU().transpose() * s.yc);
  m.intercept = s.y_mean;
  m.feature_mean = s.mean;
  m.feature_scale = s.scale;
  return m;
}

}  // namespace tartekit
