#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tartekit/downstream/features.hpp"
#include "tartekit/downstream/ridge.hpp"
#include "tartekit/encoder/checkpoint.hpp"

namespace tartekit {

struct FineTuneConfig {
  std::vector<double> learning_rates{1e-4, 2.5e-4, 5e-4, 7.5e-4, 1e-3};
  int batch_size = 0;  // 0 picks 16 below 10000 rows and 256 otherwise
  int bags = 5;
  double validation_fraction = 0.2;
  int patience = 20;  // epochs without validation improvement
  int max_epochs = 100;
  double weight_decay = 0.01;
  bool train_rho = true;  // column/cell maps train along with the head
  std::uint64_t seed = 0;

  void validate() const;
  int batch_size_for(std::size_t n) const;
};

// One bag: its own column/cell maps and a three-block head (d, d, 1).
struct FineTuneMember {
  RhoBlock rho_column;
  RhoBlock rho_cell;
  std::vector<RhoBlock> head;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> validation_rows;
  double validation_loss = 0.0;
  int epochs = 0;  // epochs actually run
};

class FineTunedModel {
 public:
  std::shared_ptr<const EncoderModel> backbone;  // frozen, shared by members
  TaskKind task = TaskKind::Regression;
  double target_mean = 0.0;   // regression targets are trained standardized
  double target_scale = 1.0;
  double learning_rate = 0.0;
  std::vector<double> grid_losses;  // mean validation loss per learning rate
  std::vector<FineTuneMember> members;

  // Head output before the link: standardized value or logit.
  double member_raw(std::size_t k, const CellPairSequence& row) const;
  // Target units for regression, probability for classification.
  VectorXd member_predict(std::size_t k, const std::vector<CellPairSequence>& rows) const;
  // Mean of member predictions.
  VectorXd predict(const std::vector<CellPairSequence>& rows) const;
  // Readout embeddings under each member's maps, averaged over members.
  FeatureMatrix featurize(const std::vector<CellPairSequence>& rows) const;
};

// Trains a bag of heads on a frozen copy of `model`, for every learning rate
// on the grid, and keeps the bag with the lowest mean validation loss. All
// learning rates see the same train/validation splits.
FineTunedModel fine_tune(const EncoderModel& model, const std::vector<CellPairSequence>& rows,
                         const std::vector<double>& y, TaskKind task, const FineTuneConfig& config);

// 16 hex digits over the values of the frozen transformer parameters.
std::string transformer_digest(const EncoderModel& model);

Checkpoint to_checkpoint(const FineTunedModel& m, const StringEmbedder& embedder);
FineTunedModel fine_tuned_from_checkpoint(const Checkpoint& ckpt);
bool is_fine_tuned_checkpoint(const Checkpoint& ckpt);

}  // namespace tartekit
