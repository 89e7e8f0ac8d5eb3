#pragma once

#include <utility>
#include <vector>

#include "tartekit/numerics/tensor.hpp"

namespace tartekit {

using PositiveMap = std::vector<std::pair<int, int>>;  // (anchor, positive) row indices

inline constexpr double kBandwidthFloor = 1e-12;

struct SimilarityMatrix {
  Var<double> kernel;      // M x M
  double bandwidth = 0.0;  // median off-diagonal distance, floored
};

// Median of the off-diagonal pairwise Euclidean distances of Z's rows.
double median_bandwidth(const MatrixXd& z);

// K_ij = exp(-|z_i - z_j|^2 / (2 h^2)) with h the median distance. h is
// computed from values and treated as a constant by the gradient.
SimilarityMatrix gaussian_kernel(Var<double> z);
MatrixXd gaussian_kernel_matrix(const MatrixXd& z, double* bandwidth = nullptr);

// Mean over both roles of every (anchor, positive) pair of
//   -log( exp(K_ip / tau) / sum_{j != i} exp(K_ij / tau) ).
Var<double> info_nce(Var<double> kernel, const PositiveMap& positives, double temperature = 1.0);
double info_nce(const MatrixXd& kernel, const PositiveMap& positives, double temperature = 1.0);

// Unweighted mean of info_nce over projections, each with its own kernel.
Var<double> matryoshka_loss(const std::vector<Var<double>>& projections, const PositiveMap& positives,
                            double temperature = 1.0);

}  // namespace tartekit
