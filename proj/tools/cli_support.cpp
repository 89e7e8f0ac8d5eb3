#include "cli_support.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "tartekit/eval/metrics.hpp"

namespace tartekit::cli {

namespace {

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void only_keys(const json& j, const std::string& section, const std::set<std::string>& keys) {
  if (!j.is_object()) throw UsageError("config section '" + section + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) throw UsageError("config: unknown key '" + k + "' in section '" + section + "'");
  }
}

json encoder_to_json(const EncoderConfig& c) {
  return {{"d_lm", c.d_lm},       {"d_model", c.d_model},
          {"layers", c.layers},   {"heads", c.heads},
          {"d_ff", c.d_ff},       {"projection_hidden", c.projection_hidden},
          {"matryoshka_dims", c.matryoshka_dims}, {"dropout", c.dropout}};
}

EncoderConfig encoder_from_json(const json& j) {
  only_keys(j, "encoder",
            {"d_lm", "d_model", "layers", "heads", "d_ff", "projection_hidden", "matryoshka_dims", "dropout"});
  EncoderConfig c;
  take(j, "d_lm", c.d_lm);
  take(j, "d_model", c.d_model);
  take(j, "layers", c.layers);
  take(j, "heads", c.heads);
  take(j, "d_ff", c.d_ff);
  take(j, "projection_hidden", c.projection_hidden);
  take(j, "matryoshka_dims", c.matryoshka_dims);
  take(j, "dropout", c.dropout);
  return c;
}

json transform_to_json(const std::optional<PowerTransform>& t) {
  if (!t) return nullptr;
  return {{"relation", t->relation}, {"lambda", t->lambda}, {"mean", t->mean}, {"std", t->std}};
}

std::optional<PowerTransform> transform_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return PowerTransform{j.at("relation").get<std::string>(), j.at("lambda").get<double>(), j.at("mean").get<double>(),
                        j.at("std").get<double>()};
}

json column_to_json(const ColumnInfo& c) {
  return {{"name", c.name},         {"kind", to_string(c.kind)},
          {"distinct", c.distinct}, {"missing", c.missing},
          {"high_cardinality", c.high_cardinality}};
}

ColumnInfo column_from_json(const json& j) {
  ColumnInfo c;
  c.name = j.at("name").get<std::string>();
  c.kind = column_kind_from_string(j.at("kind").get<std::string>());
  c.distinct = j.at("distinct").get<long>();
  c.missing = j.at("missing").get<long>();
  c.high_cardinality = j.at("high_cardinality").get<bool>();
  return c;
}

MatrixXd row_blob(const VectorXd& v) {
  MatrixXd m(1, v.size());
  m.row(0) = v.transpose();
  return m;
}

VectorXd blob_vector(const MatrixXd& m) { return Eigen::Map<const VectorXd>(m.data(), m.size()); }

void add_sub(Checkpoint& outer, json& meta, const std::string& prefix, const Checkpoint& inner) {
  for (const auto& b : inner.blobs) outer.blobs.push_back({prefix + b.name, b.data});
  meta["parts"][prefix] = {{"config", encoder_to_json(inner.config)}, {"metadata", json::parse(inner.metadata)}};
}

Checkpoint get_sub(const Checkpoint& outer, const json& meta, const std::string& prefix) {
  const json& part = meta.at("parts").at(prefix);
  Checkpoint c;
  c.config = encoder_from_json(part.at("config"));
  c.metadata = part.at("metadata").dump();
  for (const auto& b : outer.blobs) {
    if (b.name.compare(0, prefix.size(), prefix) == 0) c.blobs.push_back({b.name.substr(prefix.size()), b.data});
  }
  return c;
}

void add_ridge(Checkpoint& ckpt, json& meta, const std::string& prefix, const RidgeModel& r) {
  ckpt.blobs.push_back({prefix + "weights", row_blob(r.weights)});
  ckpt.blobs.push_back({prefix + "mean", row_blob(r.feature_mean)});
  ckpt.blobs.push_back({prefix + "scale", row_blob(r.feature_scale)});
  meta["ridges"][prefix] = {
      {"intercept", r.intercept}, {"alpha", r.alpha}, {"alphas", r.alphas}, {"loo_mse", r.loo_mse}};
}

RidgeModel get_ridge(const Checkpoint& ckpt, const json& meta, const std::string& prefix) {
  const json& j = meta.at("ridges").at(prefix);
  RidgeModel r;
  r.weights = blob_vector(ckpt.at(prefix + "weights").data);
  r.feature_mean = blob_vector(ckpt.at(prefix + "mean").data);
  r.feature_scale = blob_vector(ckpt.at(prefix + "scale").data);
  r.intercept = j.at("intercept").get<double>();
  r.alpha = j.at("alpha").get<double>();
  r.alphas = j.at("alphas").get<std::vector<double>>();
  r.loo_mse = j.at("loo_mse").get<std::vector<double>>();
  return r;
}

json vectorizer_to_json(const TableVectorizer& v) {
  json cols = json::array();
  for (const auto& c : v.columns()) {
    std::vector<std::string> levels(c.levels.size());
    for (const auto& [value, slot] : c.levels) levels.at(slot) = value;
    cols.push_back({{"info", column_to_json(c.info)},
                    {"transform", transform_to_json(c.transform)},
                    {"levels", levels},
                    {"has_other", c.has_other}});
  }
  return cols;
}

TableVectorizer vectorizer_from_json(const json& j) {
  std::vector<TableVectorizer::Column> cols;
  for (const auto& c : j) {
    TableVectorizer::Column col;
    col.info = column_from_json(c.at("info"));
    col.transform = transform_from_json(c.at("transform"));
    const auto levels = c.at("levels").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < levels.size(); ++i) col.levels.emplace(levels[i], i);
    col.has_other = c.at("has_other").get<bool>();
    cols.push_back(std::move(col));
  }
  return TableVectorizer(std::move(cols));
}

VectorXd clip_for(TaskKind task, VectorXd v) {
  if (task == TaskKind::Classification) v = v.cwiseMax(0.0).cwiseMin(1.0);
  return v;
}

VectorXd select(const VectorXd& all, const std::vector<std::size_t>& rows) {
  VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(all.size())) throw DimensionError("base predictions do not cover every row");
    out[static_cast<Eigen::Index>(i)] = all[static_cast<Eigen::Index>(rows[i])];
  }
  return out;
}

VectorXd base_for(const FittedModel& m, const Table& table, const std::vector<std::size_t>& rows,
                  const std::optional<VectorXd>& base) {
  if (m.external_base) {
    if (!base) throw UsageError("this model was fitted on external base predictions; pass --base-preds");
    return select(*base, rows);
  }
  return clip_for(m.task, m.base_ridge->predict(m.vectorizer->transform(table, rows)));
}

// Feature matrices feeding the boosting stages, in order.
std::vector<MatrixXd> stage_features(const FittedModel& m, const std::vector<CellPairSequence>& seq) {
  if (m.method == Method::Boost || m.sources.empty()) {
    return {featurize(*m.backbone, seq, m.dim).with_missing_flag()};
  }
  std::vector<MatrixXd> out;
  for (std::size_t s = 0; s < m.sources.size(); ++s) {
    const EncoderConfig& c = m.sources[s].backbone->config();
    if (c.d_lm != m.backbone->config().d_lm) {
      throw DimensionError("source " + std::to_string(s) + " expects d_lm=" + std::to_string(c.d_lm) +
                           " but the embedder gives " + std::to_string(m.backbone->config().d_lm));
    }
    out.push_back(m.sources[s].featurize(seq).with_missing_flag());
  }
  return out;
}

std::vector<std::string> stage_names(const FittedModel& m) {
  if (m.method == Method::Boost || m.sources.empty()) return {"backbone"};
  std::vector<std::string> out;
  for (std::size_t s = 0; s < m.sources.size(); ++s) out.push_back("source" + std::to_string(s));
  return out;
}

}  // namespace

RunConfig load_config(const std::optional<fs::path>& path) {
  RunConfig rc;
  if (!path) return rc;
  std::ifstream in(*path);
  if (!in) throw IoError("cannot open config " + path->string());
  try {
    rc.source = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path->string() + ": " + e.what());
  }
  const json& j = rc.source;
  only_keys(j, "top level", {"encoder", "embedder", "pretrain", "finetune"});
  if (j.contains("encoder")) rc.encoder = encoder_from_json(j.at("encoder"));
  rc.pretrain.matryoshka_dims = rc.encoder.matryoshka_dims;
  rc.pretrain.dropout = rc.encoder.dropout;
  if (j.contains("embedder")) {
    const json& e = j.at("embedder");
    only_keys(e, "embedder", {"min_n", "max_n", "buckets", "seed", "lookup"});
    take(e, "min_n", rc.ngrams.min_n);
    take(e, "max_n", rc.ngrams.max_n);
    take(e, "buckets", rc.ngrams.buckets);
    take(e, "seed", rc.ngrams.seed);
    if (e.contains("lookup")) rc.lookup = e.at("lookup").get<std::string>();
  }
  if (j.contains("pretrain")) {
    const json& p = j.at("pretrain");
    only_keys(p, "pretrain",
              {"entities_per_batch", "facts_per_row", "max_duplicates", "two_replacements", "total_steps",
               "warmup_steps", "lr_min", "lr_max", "decay", "weight_decay", "dropout", "matryoshka_dims",
               "temperature", "seed", "checkpoint_interval"});
    auto& c = rc.pretrain;
    take(p, "entities_per_batch", c.entities_per_batch);
    take(p, "facts_per_row", c.facts_per_row);
    take(p, "max_duplicates", c.max_duplicates);
    take(p, "two_replacements", c.two_replacements);
    take(p, "total_steps", c.total_steps);
    take(p, "warmup_steps", c.warmup_steps);
    take(p, "lr_min", c.lr_min);
    take(p, "lr_max", c.lr_max);
    if (p.contains("decay")) {
      const auto d = p.at("decay").get<std::string>();
      if (d != "linear" && d != "cosine") throw UsageError("config: pretrain.decay must be linear or cosine");
      c.decay = d == "linear" ? DecayShape::Linear : DecayShape::Cosine;
    }
    take(p, "weight_decay", c.weight_decay);
    take(p, "dropout", c.dropout);
    take(p, "matryoshka_dims", c.matryoshka_dims);
    take(p, "temperature", c.temperature);
    take(p, "seed", c.seed);
    take(p, "checkpoint_interval", c.checkpoint_interval);
  }
  if (j.contains("finetune")) {
    const json& f = j.at("finetune");
    only_keys(f, "finetune",
              {"learning_rates", "batch_size", "bags", "validation_fraction", "patience", "max_epochs",
               "weight_decay", "train_rho", "seed"});
    auto& c = rc.finetune;
    take(f, "learning_rates", c.learning_rates);
    take(f, "batch_size", c.batch_size);
    take(f, "bags", c.bags);
    take(f, "validation_fraction", c.validation_fraction);
    take(f, "patience", c.patience);
    take(f, "max_epochs", c.max_epochs);
    take(f, "weight_decay", c.weight_decay);
    take(f, "train_rho", c.train_rho);
    take(f, "seed", c.seed);
  }
  rc.encoder.validate();
  rc.finetune.validate();
  return rc;
}

StringEmbedder make_embedder(const RunConfig& config) {
  StringEmbedder e(config.encoder.d_lm, config.ngrams);
  if (config.lookup) e.load_lookup(*config.lookup);
  return e;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Baseline: return "baseline";
    case Method::Ridge: return "ridge";
    case Method::FineTune: return "finetune";
    case Method::Boost: return "boost";
    case Method::Specialize: return "specialize";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::Baseline, Method::Ridge, Method::FineTune, Method::Boost, Method::Specialize}) {
    if (to_string(m) == s) return m;
  }
  throw UsageError("unknown method '" + s + "' (expected baseline, ridge, finetune, boost or specialize)");
}

void save_fitted(const fs::path& path, const FittedModel& m) {
  Checkpoint ckpt;
  json meta = {{"kind", "fitted"},
               {"method", to_string(m.method)},
               {"task", to_string(m.task)},
               {"target", m.target},
               {"dim", m.dim},
               {"residual_space", to_string(m.space)},
               {"external_base", m.external_base},
               {"backbone_id", m.backbone_id},
               {"parts", json::object()},
               {"ridges", json::object()}};
  if (m.backbone) {
    ckpt.config = m.backbone->config();
    add_sub(ckpt, meta, "backbone.", make_encoder_checkpoint(*m.backbone, *m.embedder, "backbone"));
  }
  if (m.preprocessor) {
    json cols = json::array();
    for (std::size_t j = 0; j < m.preprocessor->columns().size(); ++j) {
      json c = column_to_json(m.preprocessor->columns()[j]);
      c["transform"] = transform_to_json(m.preprocessor->specs()[j].transform);
      cols.push_back(std::move(c));
    }
    meta["columns"] = std::move(cols);
  }
  if (m.ridge) add_ridge(ckpt, meta, "ridge.", *m.ridge);
  if (m.vectorizer) meta["vectorizer"] = vectorizer_to_json(*m.vectorizer);
  if (m.base_ridge) add_ridge(ckpt, meta, "base_ridge.", *m.base_ridge);
  if (m.finetuned) add_sub(ckpt, meta, "finetuned.", to_checkpoint(*m.finetuned, *m.embedder));
  for (std::size_t s = 0; s < m.sources.size(); ++s) {
    add_sub(ckpt, meta, "source" + std::to_string(s) + ".", to_checkpoint(m.sources[s], *m.embedder));
  }
  meta["sources"] = m.sources.size();
  if (m.boosted) {
    json stages = json::array();
    for (std::size_t s = 0; s < m.boosted->stages.size(); ++s) {
      stages.push_back(m.boosted->stages[s].source);
      add_ridge(ckpt, meta, "stage" + std::to_string(s) + ".", m.boosted->stages[s].ridge);
    }
    meta["stages"] = std::move(stages);
  }
  ckpt.metadata = meta.dump();
  write_checkpoint(path, ckpt);
}

FittedModel load_fitted(const fs::path& path, const std::optional<fs::path>& lookup) {
  const Checkpoint ckpt = read_checkpoint(path);
  const json meta = json::parse(ckpt.metadata);
  if (meta.value("kind", "") != "fitted") {
    throw UsageError(path.string() + " is not a fitted model (write one with `tartekit fit`)");
  }
  FittedModel m;
  m.method = method_from_string(meta.at("method").get<std::string>());
  m.task = task_kind_from_string(meta.at("task").get<std::string>());
  m.target = meta.at("target").get<std::string>();
  m.dim = meta.at("dim").get<int>();
  m.space = residual_space_from_string(meta.at("residual_space").get<std::string>());
  m.external_base = meta.at("external_base").get<bool>();
  m.backbone_id = meta.at("backbone_id").get<std::string>();
  if (meta.at("parts").contains("backbone.")) {
    const Checkpoint b = get_sub(ckpt, meta, "backbone.");
    m.backbone = std::make_shared<EncoderModel>(model_from_checkpoint(b));
    auto e = std::make_shared<StringEmbedder>(embedder_from_checkpoint(b));
    if (lookup) e->load_lookup(*lookup);  // tables are not stored, only the fallback settings
    m.embedder = e;
  }
  if (meta.contains("columns")) {
    std::vector<ColumnInfo> cols;
    std::vector<ColumnSpec> specs;
    for (const auto& c : meta.at("columns")) {
      cols.push_back(column_from_json(c));
      specs.push_back(make_column_spec(cols.back().name, cols.back().kind, *m.embedder,
                                       transform_from_json(c.at("transform"))));
    }
    m.preprocessor.emplace(std::move(cols), std::move(specs), *m.embedder);
  }
  const json& ridges = meta.at("ridges");
  if (ridges.contains("ridge.")) m.ridge = get_ridge(ckpt, meta, "ridge.");
  if (meta.contains("vectorizer")) m.vectorizer = vectorizer_from_json(meta.at("vectorizer"));
  if (ridges.contains("base_ridge.")) m.base_ridge = get_ridge(ckpt, meta, "base_ridge.");
  if (meta.at("parts").contains("finetuned.")) {
    m.finetuned = fine_tuned_from_checkpoint(get_sub(ckpt, meta, "finetuned."));
  }
  for (std::size_t s = 0; s < meta.at("sources").get<std::size_t>(); ++s) {
    m.sources.push_back(fine_tuned_from_checkpoint(get_sub(ckpt, meta, "source" + std::to_string(s) + ".")));
  }
  if (meta.contains("stages")) {
    BoostedModel b;
    b.task = m.task;
    b.space = m.space;
    const auto names = meta.at("stages").get<std::vector<std::string>>();
    for (std::size_t s = 0; s < names.size(); ++s) {
      b.stages.push_back({names[s], get_ridge(ckpt, meta, "stage" + std::to_string(s) + ".")});
    }
    m.boosted = std::move(b);
  }
  return m;
}

VectorXd predict_rows(const FittedModel& m, const Table& table, const std::vector<std::size_t>& rows,
                      const std::optional<VectorXd>& base) {
  if (m.method == Method::Baseline) {
    return clip_for(m.task, m.base_ridge->predict(m.vectorizer->transform(table, rows)));
  }
  const std::vector<CellPairSequence> seq = m.preprocessor->rows(table, rows);
  switch (m.method) {
    case Method::Ridge:
      return clip_for(m.task, m.ridge->predict(featurize(*m.backbone, seq, m.dim).with_missing_flag()));
    case Method::FineTune:
      return m.finetuned->predict(seq);
    default:
      return m.boosted->predict(base_for(m, table, rows, base), stage_features(m, seq));
  }
}

FittedModel fit_method(const FitInputs& in) {
  const Table& table = *in.table;
  FittedModel m;
  m.method = in.method;
  m.task = in.schema->task;
  m.target = in.schema->target;
  m.dim = in.dim;
  m.space = in.space;
  m.external_base = in.base.has_value();
  m.backbone = in.backbone;
  m.embedder = in.embedder;
  m.backbone_id = in.backbone_id;
  VectorXd y(static_cast<Eigen::Index>(in.train.size()));
  for (std::size_t i = 0; i < in.train.size(); ++i) y[static_cast<Eigen::Index>(i)] = (*in.y)[in.train[i]];

  const bool builtin_base = in.method == Method::Baseline ||
                            ((in.method == Method::Boost || in.method == Method::Specialize) && !in.base);
  if (builtin_base) {
    m.vectorizer.emplace(*in.schema, table, in.train);
    m.base_ridge = fit_ridge_loocv(m.vectorizer->transform(table, in.train), y);
  }
  if (in.method == Method::Baseline) return m;

  if (!in.backbone) throw UsageError("method " + to_string(in.method) + " needs a pretrained --model checkpoint");
  if (in.method != Method::FineTune && in.dim != in.backbone->config().d_model && !in.backbone->head(in.dim)) {
    throw UsageError("--dim " + std::to_string(in.dim) + " is neither d_model nor a projection dim of the checkpoint");
  }
  m.preprocessor.emplace(*in.schema, table, in.train, *in.embedder);
  const std::vector<CellPairSequence> seq = m.preprocessor->rows(table, in.train);
  switch (in.method) {
    case Method::Ridge:
      m.ridge = fit_ridge_loocv(featurize(*in.backbone, seq, in.dim).with_missing_flag(), y);
      break;
    case Method::FineTune:
      m.finetuned = fine_tune(*in.backbone, seq, std::vector<double>(y.data(), y.data() + y.size()), m.task,
                              in.finetune);
      break;
    default: {
      if (in.method == Method::Specialize) m.sources = in.sources;
      const VectorXd base = base_for(m, table, in.train, in.base);
      const std::vector<MatrixXd> f = stage_features(m, seq);
      m.boosted = boost_chain(base, base, f, f, y, m.task, m.space, stage_names(m)).model;
    }
  }
  return m;
}

VectorXd align_predictions(const Predictions& p, const std::vector<std::string>& ids) {
  std::map<std::string, double> by_id;
  for (std::size_t i = 0; i < p.row_ids.size(); ++i) {
    if (!by_id.emplace(p.row_ids[i], p.values[i]).second) {
      throw ParseError("base predictions repeat row id '" + p.row_ids[i] + "'");
    }
  }
  VectorXd out(static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = by_id.find(ids[i]);
    if (it == by_id.end()) throw ParseError("base predictions have no row id '" + ids[i] + "'");
    out[static_cast<Eigen::Index>(i)] = it->second;
  }
  return out;
}

std::vector<std::string> row_ids(const Table& table, const std::string& id_column) {
  std::vector<std::string> out;
  if (id_column.empty()) {
    for (std::size_t i = 0; i < table.n_rows(); ++i) out.push_back(std::to_string(i));
    return out;
  }
  const std::size_t c = table.column(id_column);
  for (const auto& r : table.rows) out.push_back(r[c]);
  return out;
}

double evaluate_metric(TaskKind task, const std::vector<double>& y, const std::vector<double>& pred) {
  return task == TaskKind::Regression ? metric_r2(y, pred) : metric_auroc(y, pred);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Manifest::Manifest(std::string command, int argc, char** argv) {
  doc_["command"] = std::move(command);
  doc_["argv"] = std::vector<std::string>(argv, argv + argc);
  doc_["inputs"] = json::object();
  doc_["outputs"] = json::object();
}

void Manifest::input(const fs::path& p) { doc_["inputs"][p.string()] = file_digest(p); }

void Manifest::output(const fs::path& p) { outputs_.push_back(p); }

void Manifest::write(const fs::path& dir) const {
  json doc = doc_;
  for (const auto& p : outputs_) doc["outputs"][p.filename().string()] = file_digest(p);
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << doc.dump(2) << '\n';
}

std::string config_hash(const RunConfig& config) { return bytes_digest(config.source.dump()); }

}  // namespace tartekit::cli
