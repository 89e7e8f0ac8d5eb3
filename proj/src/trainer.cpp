#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tartekit/pretrain/trainer.hpp"

namespace tartekit {

namespace {

std::vector<const ProjectionHead*> heads_for(const EncoderModel& model, const std::vector<int>& dims) {
  std::vector<const ProjectionHead*> out;
  for (int dim : dims) {
    const ProjectionHead* h = model.head(dim);
    if (h == nullptr) throw InvalidArgument("pretrain: model has no projection head of width " + std::to_string(dim));
    out.push_back(h);
  }
  return out;
}

Checkpoint snapshot(const EncoderModel& model, const StringEmbedder& embedder, const std::vector<Param*>& params,
                    const OptimizerState<double>& state, std::int64_t step) {
  Checkpoint ckpt = make_encoder_checkpoint(model, embedder, "pretrain");
  auto meta = nlohmann::json::parse(ckpt.metadata);
  meta["step"] = step;
  ckpt.metadata = meta.dump();
  add_optimizer_blobs(ckpt, params, state);
  return ckpt;
}

std::string diagnostics(std::int64_t step, double lr, double loss, const std::vector<Param*>& params) {
  std::ostringstream os;
  os << "non-finite pre-training loss " << loss << " at step " << step << " (lr " << lr << ")\n  gradient norms:";
  for (const auto* p : params) os << "\n    " << p->name << " " << p->grad.norm();
  return os.str();
}

}  // namespace

void PretrainConfig::validate() const {
  if (entities_per_batch < 2) throw InvalidArgument("pretrain: need at least two entities per batch");
  if (facts_per_row < 1 || max_duplicates < 1) throw InvalidArgument("pretrain: facts per row and cap must be >= 1");
  if (total_steps < 0) throw InvalidArgument("pretrain: total_steps must be non-negative");
  if (!(temperature > 0.0)) throw InvalidArgument("pretrain: temperature must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw InvalidArgument("pretrain: dropout must be in [0, 1)");
  if (matryoshka_dims.empty()) throw InvalidArgument("pretrain: at least one projection dim is required");
  if (checkpoint_interval < 1) throw InvalidArgument("pretrain: checkpoint_interval must be positive");
  if (total_steps > 0) schedule().validate();
}

LrSchedule PretrainConfig::schedule() const { return {lr_min, lr_max, warmup_steps, total_steps, decay}; }

void add_optimizer_blobs(Checkpoint& ckpt, const std::vector<Param*>& params, const OptimizerState<double>& state) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    ckpt.blobs.push_back({"optimizer.m." + params[i]->name, state.first_moment.at(i)});
    ckpt.blobs.push_back({"optimizer.v." + params[i]->name, state.second_moment.at(i)});
  }
  ckpt.blobs.push_back({"optimizer.step", MatrixXd::Constant(1, 1, static_cast<double>(state.step))});
}

OptimizerState<double> optimizer_from_checkpoint(const Checkpoint& ckpt, const std::vector<Param*>& params,
                                                 AdamWOptions<double> options) {
  OptimizerState<double> state = make_optimizer_state(params, options);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& m = ckpt.at("optimizer.m." + params[i]->name).data;
    const auto& v = ckpt.at("optimizer.v." + params[i]->name).data;
    if (m.rows() != params[i]->value.rows() || m.cols() != params[i]->value.cols() || v.rows() != m.rows() ||
        v.cols() != m.cols()) {
      throw DimensionError("optimizer state for '" + params[i]->name + "' has the wrong shape");
    }
    state.first_moment[i] = m;
    state.second_moment[i] = v;
  }
  state.step = static_cast<std::int64_t>(ckpt.at("optimizer.step").data(0, 0));
  return state;
}

PretrainResult pretrain(const KnowledgeStore& store, EncoderModel& model, const StringEmbedder& embedder,
                        const PretrainConfig& config, const PretrainOutputs& outputs) {
  config.validate();
  model.set_dropout(config.dropout);
  const auto heads = heads_for(model, config.matryoshka_dims);
  std::vector<Param*> params = model.parameters();
  AdamWOptions<double> adam;
  adam.weight_decay = config.weight_decay;
  OptimizerState<double> state = make_optimizer_state(params, adam);

  PretrainResult result;
  if (outputs.checkpoint_dir) std::filesystem::create_directories(*outputs.checkpoint_dir);
  auto save = [&](std::int64_t step) {
    result.checkpoint = snapshot(model, embedder, params, state, step);
    if (!outputs.checkpoint_dir) return;
    const auto path = *outputs.checkpoint_dir / ("step_" + std::to_string(step) + ".ckpt");
    write_checkpoint(path, result.checkpoint);
    result.written.push_back(path);
  };
  if (outputs.loss_log) *outputs.loss_log << "step,lr,loss\n";
  if (config.total_steps == 0) {
    save(0);
    return result;
  }

  const FactEncoder facts(store, embedder);
  const BatchSampler sampler(store, {config.facts_per_row, config.max_duplicates, config.two_replacements});
  const LrSchedule schedule = config.schedule();
  std::mt19937_64 batch_rng(config.seed);
  std::mt19937_64 dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  for (std::int64_t step = 0; step < config.total_steps; ++step) {
    const double lr = lr_at(schedule, step);
    const PretrainBatch batch = sampler.sample(config.entities_per_batch, batch_rng);
    zero_grad(params);
    Tape<double> tape;
    std::vector<Var<double>> readouts;
    readouts.reserve(batch.rows.size());
    for (const auto& row : batch.rows) {
      readouts.push_back(encode_row(tape, model, assemble_input(tape, model, facts.row(row)), &dropout_rng));
    }
    const Var<double> h = vstack(readouts);
    std::vector<Var<double>> projections;
    for (const auto* head : heads) projections.push_back(project(tape, *head, h));
    const Var<double> loss = matryoshka_loss(projections, batch.positive_map, config.temperature);
    const double value = loss.value()(0, 0);
    tape.backward(loss);
    if (!std::isfinite(value) || !std::isfinite(grad_norm(params))) {
      throw NumericError(diagnostics(step, lr, value, params));
    }
    adamw_step(params, state, lr);
    result.trace.push_back({step, lr, value});
    if (outputs.loss_log) {
      *outputs.loss_log << step << ',' << std::setprecision(17) << lr << ',' << value << '\n';
    }
    if ((step + 1) % config.checkpoint_interval == 0 && step + 1 < config.total_steps) save(step + 1);
  }
  save(config.total_steps);
  return result;
}

MatrixXd embed_batch(const EncoderModel& model, const FactEncoder& facts, const PretrainBatch& batch, int dim) {
  const ProjectionHead* head = nullptr;
  if (dim != 0) {
    head = model.head(dim);
    if (head == nullptr) throw InvalidArgument("embed_batch: no projection head of width " + std::to_string(dim));
  }
  MatrixXd out(static_cast<Eigen::Index>(batch.rows.size()), dim == 0 ? model.config().d_model : dim);
  for (std::size_t i = 0; i < batch.rows.size(); ++i) {
    Tape<double> tape(false);
    Var<double> h = encode_row(tape, model, assemble_input(tape, model, facts.row(batch.rows[i])));
    if (head) h = project(tape, *head, h);
    out.row(static_cast<Eigen::Index>(i)) = h.value();
  }
  return out;
}

PairSimilarity pair_similarity(const MatrixXd& embeddings, const PositiveMap& positives) {
  const MatrixXd k = gaussian_kernel_matrix(embeddings);
  const Eigen::Index m = k.rows();
  PairSimilarity s;
  double neg_sum = 0.0;
  long neg_count = 0;
  for (const auto& [a, p] : positives) {
    s.positive += k(a, p);
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j == a || j == p) continue;
      neg_sum += k(a, j);
      ++neg_count;
    }
  }
  s.positive /= static_cast<double>(positives.size());
  s.negative = neg_count > 0 ? neg_sum / static_cast<double>(neg_count) : 0.0;
  return s;
}

}  // namespace tartekit
