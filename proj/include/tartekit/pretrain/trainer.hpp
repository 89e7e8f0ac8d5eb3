#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tartekit/encoder/checkpoint.hpp"
#include "tartekit/kb/store.hpp"
#include "tartekit/numerics/optim.hpp"
#include "tartekit/pretrain/contrastive.hpp"

namespace tartekit {

struct PretrainConfig {
  int entities_per_batch = 256;  // N_b; a batch holds 2 N_b rows
  int facts_per_row = 8;         // F
  int max_duplicates = 2;
  double two_replacements = 0.5;
  std::int64_t total_steps = 200000;
  std::int64_t warmup_steps = 2000;
  double lr_min = 1e-8;
  double lr_max = 1e-6;
  DecayShape decay = DecayShape::Linear;
  double weight_decay = 0.01;
  double dropout = 0.1;
  std::vector<int> matryoshka_dims{64, 128, 256, 512, 768};
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_interval = 10000;

  void validate() const;
  LrSchedule schedule() const;
};

struct LossRecord {
  std::int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;

  bool operator==(const LossRecord&) const = default;
};

struct PretrainOutputs {
  std::optional<std::filesystem::path> checkpoint_dir;  // step_<n>.ckpt files
  std::ostream* loss_log = nullptr;                      // CSV step,lr,loss
};

struct PretrainResult {
  std::vector<LossRecord> trace;
  Checkpoint checkpoint;  // final weights plus optimizer state
  std::vector<std::filesystem::path> written;
};

// Contrastive training of `model` in place. Each step samples a batch,
// encodes every row with dropout, projects through the configured heads and
// takes one AdamW step on the Matryoshka loss. A non-finite loss aborts with
// the step, learning rate and gradient norms in the message.
PretrainResult pretrain(const KnowledgeStore& store, EncoderModel& model, const StringEmbedder& embedder,
                        const PretrainConfig& config, const PretrainOutputs& outputs = {});

// Optimizer moments and step stored as blobs "optimizer.m.<param>",
// "optimizer.v.<param>" and "optimizer.step".
void add_optimizer_blobs(Checkpoint& ckpt, const std::vector<Param*>& params, const OptimizerState<double>& state);
OptimizerState<double> optimizer_from_checkpoint(const Checkpoint& ckpt, const std::vector<Param*>& params,
                                                 AdamWOptions<double> options = {});

// Eval-mode embeddings of a batch through the head of width `dim` (0 means
// the readout itself).
MatrixXd embed_batch(const EncoderModel& model, const FactEncoder& facts, const PretrainBatch& batch, int dim = 0);

struct PairSimilarity {
  double positive = 0.0;  // mean K over anchor/positive pairs
  double negative = 0.0;  // mean K over anchors and rows of other entities
};

PairSimilarity pair_similarity(const MatrixXd& embeddings, const PositiveMap& positives);

}  // namespace tartekit
