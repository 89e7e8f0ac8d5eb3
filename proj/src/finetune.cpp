#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "tartekit/downstream/finetune.hpp"
#include "tartekit/numerics/optim.hpp"

namespace tartekit {

namespace {

constexpr std::size_t kMinRows = 8;

std::vector<Param*> rho_params(RhoBlock& r) { return {&r.norm_gain, &r.norm_bias, &r.weight, &r.bias}; }
std::vector<const Param*> rho_params(const RhoBlock& r) { return {&r.norm_gain, &r.norm_bias, &r.weight, &r.bias}; }

std::vector<Param*> trainable(FineTuneMember& m, bool train_rho) {
  std::vector<Param*> out;
  if (train_rho) {
    for (auto* p : rho_params(m.rho_column)) out.push_back(p);
    for (auto* p : rho_params(m.rho_cell)) out.push_back(p);
  }
  for (auto& b : m.head) {
    for (auto* p : rho_params(b)) out.push_back(p);
  }
  return out;
}

std::vector<const Param*> member_params(const FineTuneMember& m) {
  std::vector<const Param*> out;
  for (const RhoBlock* r : {&m.rho_column, &m.rho_cell}) {
    for (const auto* p : rho_params(*r)) out.push_back(p);
  }
  for (const auto& b : m.head) {
    for (const auto* p : rho_params(b)) out.push_back(p);
  }
  return out;
}

std::mt19937_64 bag_rng(std::uint64_t seed, std::size_t bag, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(bag), static_cast<std::uint32_t>(salt)};
  return std::mt19937_64(seq);
}

// Readout row for one sequence, zeros when the row has no cells.
Var<double> readout(Tape<double>& tape, const EncoderModel& backbone, const FineTuneMember& m,
                    const CellPairSequence& row, std::mt19937_64* rng) {
  if (row.pairs.empty()) return tape.constant(MatrixXd::Zero(1, backbone.config().d_model));
  return encode_row(tape, backbone, assemble_input(tape, backbone, row, m.rho_column, m.rho_cell), rng);
}

Var<double> head_forward(Tape<double>& tape, const FineTuneMember& m, Var<double> h) {
  for (const auto& b : m.head) h = rho_forward(tape, b, h);
  return h;
}

Var<double> loss_of(TaskKind task, Var<double> out, const MatrixXd& target) {
  return task == TaskKind::Regression ? mse(out, target) : bce_with_logits(out, target);
}

double validation_loss(const EncoderModel& backbone, const FineTuneMember& m, TaskKind task,
                       const std::vector<CellPairSequence>& rows, const std::vector<double>& target) {
  Tape<double> tape(false);
  std::vector<Var<double>> outs;
  MatrixXd t(static_cast<Eigen::Index>(m.validation_rows.size()), 1);
  for (std::size_t i = 0; i < m.validation_rows.size(); ++i) {
    const std::size_t r = m.validation_rows[i];
    outs.push_back(head_forward(tape, m, readout(tape, backbone, m, rows[r], nullptr)));
    t(static_cast<Eigen::Index>(i), 0) = target[r];
  }
  return loss_of(task, vstack(outs), t).value()(0, 0);
}

void train_member(const EncoderModel& backbone, FineTuneMember& m, TaskKind task,
                  const std::vector<CellPairSequence>& rows, const std::vector<double>& target,
                  const FineTuneConfig& config, double lr, std::mt19937_64& rng) {
  std::vector<Param*> params = trainable(m, config.train_rho);
  AdamWOptions<double> opts;
  opts.weight_decay = config.weight_decay;
  OptimizerState<double> state = make_optimizer_state(params, opts);
  const int batch = config.batch_size_for(rows.size());

  auto snapshot = [&] {
    std::vector<MatrixXd> v;
    for (auto* p : params) v.push_back(p->value);
    return v;
  };
  double best = validation_loss(backbone, m, task, rows, target);
  std::vector<MatrixXd> best_values = snapshot();
  int since_best = 0;
  std::vector<std::size_t> order = m.train_rows;
  Tape<double> tape;
  m.epochs = 0;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch));
      tape.reset();
      std::vector<Var<double>> outs;
      MatrixXd t(static_cast<Eigen::Index>(stop - start), 1);
      for (std::size_t i = start; i < stop; ++i) {
        outs.push_back(head_forward(tape, m, readout(tape, backbone, m, rows[order[i]], &rng)));
        t(static_cast<Eigen::Index>(i - start), 0) = target[order[i]];
      }
      Var<double> loss = loss_of(task, vstack(outs), t);
      zero_grad(params);
      tape.backward(loss);
      adamw_step(params, state, lr);
    }
    ++m.epochs;
    const double v = validation_loss(backbone, m, task, rows, target);
    if (v < best) {
      best = v;
      best_values = snapshot();
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  m.validation_loss = best;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

MatrixXd indices_blob(const std::vector<std::size_t>& idx) {
  MatrixXd m(1, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = static_cast<double>(idx[i]);
  return m;
}

std::vector<std::size_t> blob_indices(const MatrixXd& m) {
  std::vector<std::size_t> out;
  for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(static_cast<std::size_t>(m.data()[i]));
  return out;
}

}  // namespace

void FineTuneConfig::validate() const {
  if (learning_rates.empty()) throw InvalidArgument("fine-tune: empty learning-rate grid");
  for (double lr : learning_rates) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidArgument("fine-tune: learning rates must be positive");
  }
  if (batch_size < 0) throw InvalidArgument("fine-tune: batch size must be positive (0 for automatic)");
  if (bags < 1) throw InvalidArgument("fine-tune: at least one bag is needed");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw InvalidArgument("fine-tune: validation fraction must lie in (0, 1)");
  }
  if (max_epochs < 0) throw InvalidArgument("fine-tune: max_epochs must be non-negative");
  if (weight_decay < 0.0) throw InvalidArgument("fine-tune: weight decay must be non-negative");
}

int FineTuneConfig::batch_size_for(std::size_t n) const {
  if (batch_size > 0) return batch_size;
  return n < 10000 ? 16 : 256;
}

double FineTunedModel::member_raw(std::size_t k, const CellPairSequence& row) const {
  const FineTuneMember& m = members.at(k);
  Tape<double> tape(false);
  return head_forward(tape, m, readout(tape, *backbone, m, row, nullptr)).value()(0, 0);
}

VectorXd FineTunedModel::member_predict(std::size_t k, const std::vector<CellPairSequence>& rows) const {
  VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double raw = member_raw(k, rows[i]);
    out[static_cast<Eigen::Index>(i)] =
        task == TaskKind::Regression ? raw * target_scale + target_mean : sigmoid(raw);
  }
  return out;
}

VectorXd FineTunedModel::predict(const std::vector<CellPairSequence>& rows) const {
  if (members.empty()) throw InvalidArgument("fine-tuned model has no members");
  VectorXd sum = VectorXd::Zero(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < members.size(); ++k) sum += member_predict(k, rows);
  return sum / static_cast<double>(members.size());
}

FeatureMatrix FineTunedModel::featurize(const std::vector<CellPairSequence>& rows) const {
  if (members.empty()) throw InvalidArgument("fine-tuned model has no members");
  FeatureMatrix f;
  f.values = MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), backbone->config().d_model);
  f.missing.assign(rows.size(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].pairs.empty()) {
      f.missing[i] = 1;
      continue;
    }
    for (const auto& m : members) {
      Tape<double> tape(false);
      f.values.row(static_cast<Eigen::Index>(i)) += readout(tape, *backbone, m, rows[i], nullptr).value();
    }
  }
  f.values /= static_cast<double>(members.size());
  return f;
}

FineTunedModel fine_tune(const EncoderModel& model, const std::vector<CellPairSequence>& rows,
                         const std::vector<double>& y, TaskKind task, const FineTuneConfig& config) {
  config.validate();
  if (rows.size() != y.size()) throw DimensionError("fine-tune: rows and targets differ in length");
  if (rows.size() < kMinRows) {
    throw InvalidArgument("fine-tune needs at least " + std::to_string(kMinRows) + " rows to split off validation data, got " +
                          std::to_string(rows.size()) + "; use the frozen featurizer with ridge instead");
  }
  auto backbone = std::make_shared<EncoderModel>(model);
  backbone->freeze_transformer(config.train_rho);

  FineTunedModel out;
  out.backbone = backbone;
  out.task = task;
  std::vector<double> target = y;
  if (task == TaskKind::Regression) {
    const VectorXd v = to_vector(y);
    out.target_mean = v.mean();
    const double sd = std::sqrt((v.array() - out.target_mean).square().mean());
    out.target_scale = sd > 0.0 ? sd : 1.0;
    for (double& t : target) t = (t - out.target_mean) / out.target_scale;
  } else {
    for (double t : y) {
      if (t != 0.0 && t != 1.0) throw InvalidArgument("fine-tune: classification targets must be 0 or 1");
    }
  }

  const auto n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(config.validation_fraction * static_cast<double>(rows.size()))));
  const int train_size = static_cast<int>(rows.size() - n_val);
  std::vector<Split> splits;
  for (int b = 0; b < config.bags; ++b) {
    splits.push_back(make_split(rows.size(), {train_size, config.seed, b},
                                task == TaskKind::Classification ? &y : nullptr));
  }

  const int d = backbone->config().d_model;
  double best_loss = std::numeric_limits<double>::infinity();
  for (double lr : config.learning_rates) {
    std::vector<FineTuneMember> bag;
    double total = 0.0;
    for (int b = 0; b < config.bags; ++b) {
      std::mt19937_64 init = bag_rng(config.seed, static_cast<std::size_t>(b), 1);
      std::mt19937_64 rng = bag_rng(config.seed, static_cast<std::size_t>(b), 2);
      FineTuneMember m;
      m.rho_column = backbone->rho_column;
      m.rho_cell = backbone->rho_cell;
      m.head = {make_rho_block("head0", d, d, init), make_rho_block("head1", d, d, init),
                make_rho_block("head2", d, 1, init)};
      m.train_rows = splits[static_cast<std::size_t>(b)].train;
      m.validation_rows = splits[static_cast<std::size_t>(b)].test;
      train_member(*backbone, m, task, rows, target, config, lr, rng);
      total += m.validation_loss;
      bag.push_back(std::move(m));
    }
    const double mean_loss = total / static_cast<double>(config.bags);
    out.grid_losses.push_back(mean_loss);
    if (mean_loss < best_loss) {
      best_loss = mean_loss;
      out.learning_rate = lr;
      out.members = std::move(bag);
    }
  }
  return out;
}

std::string transformer_digest(const EncoderModel& model) {
  std::string bytes;
  for (const auto* p : model.transformer_parameters()) {
    bytes += p->name;
    bytes.append(reinterpret_cast<const char*>(p->value.data()),
                 static_cast<std::size_t>(p->value.size()) * sizeof(double));
  }
  return bytes_digest(bytes);
}

Checkpoint to_checkpoint(const FineTunedModel& m, const StringEmbedder& embedder) {
  Checkpoint ckpt = make_encoder_checkpoint(*m.backbone, embedder, "finetuned");
  auto meta = nlohmann::json::parse(ckpt.metadata);
  meta["task"] = to_string(m.task);
  meta["target_mean"] = m.target_mean;
  meta["target_scale"] = m.target_scale;
  meta["learning_rate"] = m.learning_rate;
  meta["grid_losses"] = m.grid_losses;
  meta["members"] = nlohmann::json::array();
  for (std::size_t k = 0; k < m.members.size(); ++k) {
    const auto& mem = m.members[k];
    meta["members"].push_back({{"validation_loss", mem.validation_loss}, {"epochs", mem.epochs}});
    const std::string prefix = "member" + std::to_string(k) + ".";
    for (const auto* p : member_params(mem)) ckpt.blobs.push_back({prefix + p->name, p->value});
    ckpt.blobs.push_back({prefix + "train_rows", indices_blob(mem.train_rows)});
    ckpt.blobs.push_back({prefix + "validation_rows", indices_blob(mem.validation_rows)});
  }
  ckpt.metadata = meta.dump();
  return ckpt;
}

bool is_fine_tuned_checkpoint(const Checkpoint& ckpt) {
  const auto meta = nlohmann::json::parse(ckpt.metadata, nullptr, false);
  return meta.is_object() && meta.value("kind", "") == "finetuned";
}

FineTunedModel fine_tuned_from_checkpoint(const Checkpoint& ckpt) {
  if (!is_fine_tuned_checkpoint(ckpt)) throw ParseError("checkpoint does not hold a fine-tuned model");
  const auto meta = nlohmann::json::parse(ckpt.metadata);
  FineTunedModel m;
  auto backbone = std::make_shared<EncoderModel>(model_from_checkpoint(ckpt));
  backbone->freeze_transformer();
  m.backbone = backbone;
  m.task = task_kind_from_string(meta.at("task").get<std::string>());
  m.target_mean = meta.at("target_mean").get<double>();
  m.target_scale = meta.at("target_scale").get<double>();
  m.learning_rate = meta.at("learning_rate").get<double>();
  m.grid_losses = meta.at("grid_losses").get<std::vector<double>>();
  const int d = backbone->config().d_model;
  std::mt19937_64 unused(0);
  const auto& members = meta.at("members");
  for (std::size_t k = 0; k < members.size(); ++k) {
    FineTuneMember mem;
    mem.rho_column = backbone->rho_column;
    mem.rho_cell = backbone->rho_cell;
    mem.head = {make_rho_block("head0", d, d, unused), make_rho_block("head1", d, d, unused),
                make_rho_block("head2", d, 1, unused)};
    mem.validation_loss = members[k].at("validation_loss").get<double>();
    mem.epochs = members[k].at("epochs").get<int>();
    const std::string prefix = "member" + std::to_string(k) + ".";
    for (auto* p : trainable(mem, true)) {
      const NamedBlob& b = ckpt.at(prefix + p->name);
      if (b.data.rows() != p->value.rows() || b.data.cols() != p->value.cols()) {
        throw DimensionError("checkpoint blob '" + b.name + "' has the wrong shape");
      }
      p->value = b.data;
    }
    mem.train_rows = blob_indices(ckpt.at(prefix + "train_rows").data);
    mem.validation_rows = blob_indices(ckpt.at(prefix + "validation_rows").data);
    m.members.push_back(std::move(mem));
  }
  return m;
}

}  // namespace tartekit
