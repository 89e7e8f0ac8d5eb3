#include <algorithm>
#include <cmath>

#include "tartekit/pretrain/contrastive.hpp"

namespace tartekit {

namespace {

void check_positives(const PositiveMap& positives, Eigen::Index m) {
  if (positives.empty()) throw InvalidArgument("info_nce: no anchor/positive pairs");
  for (const auto& [a, p] : positives) {
    if (a < 0 || p < 0 || a >= m || p >= m) throw InvalidArgument("info_nce: positive index outside the batch");
    if (a == p) throw InvalidArgument("info_nce: positive of row " + std::to_string(a) + " is the row itself");
  }
}

// Each term is (row, target). Both roles of every pair contribute.
std::vector<std::pair<int, int>> terms_of(const PositiveMap& positives) {
  std::vector<std::pair<int, int>> terms;
  terms.reserve(2 * positives.size());
  for (const auto& [a, p] : positives) {
    terms.emplace_back(a, p);
    terms.emplace_back(p, a);
  }
  return terms;
}

// Loss value and, when wanted, dL/dK.
double info_nce_impl(const MatrixXd& k, const PositiveMap& positives, double tau, MatrixXd* grad) {
  if (k.rows() != k.cols()) throw DimensionError("info_nce: kernel must be square");
  if (k.rows() < 2) throw InvalidArgument("info_nce: need at least two rows");
  if (!(tau > 0.0)) throw InvalidArgument("info_nce: temperature must be positive");
  check_positives(positives, k.rows());
  const auto terms = terms_of(positives);
  const double inv_terms = 1.0 / static_cast<double>(terms.size());
  const Eigen::Index m = k.rows();
  if (grad) grad->setZero(m, m);
  double loss = 0.0;
  RowVectorXd logits(m);
  for (const auto& [i, target] : terms) {
    logits = k.row(i) / tau;
    double mx = -INFINITY;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j != i) mx = std::max(mx, logits(j));
    }
    double z = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j != i) z += std::exp(logits(j) - mx);
    }
    const double lse = mx + std::log(z);
    loss += lse - logits(target);
    if (grad) {
      for (Eigen::Index j = 0; j < m; ++j) {
        if (j != i) (*grad)(i, j) += inv_terms * std::exp(logits(j) - lse) / tau;
      }
      (*grad)(i, target) -= inv_terms / tau;
    }
  }
  return loss * inv_terms;
}

}  // namespace

double median_bandwidth(const MatrixXd& z) {
  const Eigen::Index m = z.rows();
  if (m < 2) throw InvalidArgument("median_bandwidth: need at least two rows");
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) d.push_back((z.row(i) - z.row(j)).norm());
  }
  // Each distance appears twice off the diagonal, so the median over the
  // upper triangle equals the median over all off-diagonal entries.
  const std::size_t n = d.size();
  std::nth_element(d.begin(), d.begin() + n / 2, d.end());
  double med = d[n / 2];
  if (n % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), d.begin() + n / 2));
  return std::max(med, kBandwidthFloor);
}

SimilarityMatrix gaussian_kernel(Var<double> z) {
  const double h = median_bandwidth(z.value());
  Var<double> d2 = pairwise_sq_dists(z);
  return {exponential(scale(d2, -1.0 / (2.0 * h * h))), h};
}

MatrixXd gaussian_kernel_matrix(const MatrixXd& z, double* bandwidth) {
  Tape<double> tape(false);
  auto k = gaussian_kernel(tape.constant(z));
  if (bandwidth) *bandwidth = k.bandwidth;
  return k.kernel.value();
}

Var<double> info_nce(Var<double> kernel, const PositiveMap& positives, double temperature) {
  MatrixXd grad;
  Tape<double>& tape = *kernel.tape;
  const bool wants = tape.needs_grad(kernel);
  const double loss = info_nce_impl(kernel.value(), positives, temperature, wants ? &grad : nullptr);
  return tape.push(MatrixXd::Constant(1, 1, loss), wants,
                   [kernel, grad = std::move(grad)](Tape<double>& tp, const MatrixXd& g) {
                     tp.accumulate(kernel, g(0, 0) * grad);
                   });
}

double info_nce(const MatrixXd& kernel, const PositiveMap& positives, double temperature) {
  return info_nce_impl(kernel, positives, temperature, nullptr);
}

Var<double> matryoshka_loss(const std::vector<Var<double>>& projections, const PositiveMap& positives, double temperature) {
  if (projections.empty()) throw InvalidArgument("matryoshka_loss: no projections");
  Var<double> total = info_nce(gaussian_kernel(projections[0]).kernel, positives, temperature);
  for (std::size_t i = 1; i < projections.size(); ++i) {
    total = add(total, info_nce(gaussian_kernel(projections[i]).kernel, positives, temperature));
  }
  return scale(total, 1.0 / static_cast<double>(projections.size()));
}

}  // namespace tartekit
