// tartekit command-line tool. Every command that writes files takes --out
// and leaves a manifest.json next to its outputs.

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>

#include <CLI11.hpp>

#include "cli_support.hpp"
#include "tartekit/eval/metrics.hpp"
#include "tartekit/kb/synthetic.hpp"

using namespace tartekit;
using namespace tartekit::cli;

namespace {

struct Common {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool needs_out) {
  app->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Random seed (overrides the config)");
  auto* out = app->add_option("--out", c.out, "Output directory");
  if (needs_out) out->required();
}

RunConfig config_of(const Common& c) {
  return load_config(c.config ? std::optional<fs::path>(*c.config) : std::nullopt);
}

fs::path out_dir(const Common& c) {
  fs::create_directories(c.out);
  return c.out;
}

std::string fixed(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Backbone {
  std::shared_ptr<const EncoderModel> model;
  std::shared_ptr<const StringEmbedder> embedder;
  std::string id;
};

Backbone load_backbone(const std::string& path, const RunConfig& config) {
  Backbone b;
  const Checkpoint ckpt = read_checkpoint(path);
  b.model = std::make_shared<EncoderModel>(model_from_checkpoint(ckpt));
  auto e = std::make_shared<StringEmbedder>(embedder_from_checkpoint(ckpt));
  if (config.lookup) e->load_lookup(*config.lookup);
  b.embedder = e;
  b.id = file_digest(path);
  return b;
}

struct TableInput {
  Table table;
  TableSchema schema;
  std::vector<double> y;
  std::vector<std::string> ids;
};

TableInput read_table(const std::string& path, const std::string& target, const std::string& task,
                      const std::string& id_column) {
  TableInput t;
  t.table = read_csv(path);
  t.schema = infer_schema(t.table, target, task_kind_from_string(task));
  if (!id_column.empty()) {
    auto& f = t.schema.features;
    f.erase(std::remove_if(f.begin(), f.end(), [&](const ColumnInfo& c) { return c.name == id_column; }), f.end());
  }
  if (!target.empty()) t.y = target_values(t.table, t.schema);
  t.ids = row_ids(t.table, id_column);
  return t;
}

void write_preds(const fs::path& path, const std::vector<std::string>& ids, const std::vector<std::size_t>& rows,
                 const VectorXd& values) {
  Predictions p;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    p.row_ids.push_back(ids[rows[i]]);
    p.values.push_back(values[static_cast<Eigen::Index>(i)]);
  }
  write_predictions(path, p);
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

int cmd_kb_stats(const std::string& path, const Common& c, int argc, char** argv) {
  const KnowledgeStore store = load_triples(path);
  const KbStatistics s = store.statistics();
  json stats = {{"entities", s.entities}, {"relations", s.relations}, {"facts", s.facts}};
  std::cout << "entities: " << s.entities << "\nrelations: " << s.relations << "\nfacts: " << s.facts << '\n';
  for (int r = 0; r < store.relation_count(); ++r) {
    const Relation& rel = store.relation(r);
    std::cout << "relation\t" << rel.name << "\tkind=" << to_string(rel.kind) << "\tfacts=" << rel.fact_count
              << "\tdistinct=" << rel.pool.size() << '\n';
    stats["per_relation"].push_back(
        {{"name", rel.name}, {"kind", to_string(rel.kind)}, {"facts", rel.fact_count}, {"distinct", rel.pool.size()}});
  }
  if (!c.out.empty()) {
    const fs::path dir = out_dir(c);
    Manifest m("kb-stats", argc, argv);
    m.input(path);
    std::ofstream(dir / "stats.json") << stats.dump(2) << '\n';
    m.output(dir / "stats.json");
    m.write(dir);
  }
  return 0;
}

int cmd_toy_kb(int entities, int clusters, const Common& c, int argc, char** argv) {
  SyntheticKbOptions o;
  o.entities = entities;
  o.clusters = clusters;
  o.seed = c.seed.value_or(0);
  const SyntheticKb kb = make_synthetic_kb(o);
  const fs::path dir = out_dir(c);
  {
    std::ofstream out(dir / "kb.tsv");
    write_triples(out, kb.triples);
  }
  Table t;
  t.header = {"entity", "cluster"};
  for (std::size_t i = 0; i < kb.entity_names.size(); ++i) {
    t.rows.push_back({kb.entity_names[i], std::to_string(kb.cluster[i])});
  }
  {
    std::ofstream out(dir / "clusters.csv");
    write_csv(out, t);
  }
  Manifest m("toy-kb", argc, argv);
  m.set("seed", o.seed);
  m.output(dir / "kb.tsv");
  m.output(dir / "clusters.csv");
  m.write(dir);
  std::cout << "wrote " << kb.triples.size() << " triples for " << kb.entity_names.size() << " entities\n";
  return 0;
}

int cmd_pretrain(const std::string& kb_path, std::optional<std::int64_t> steps, const Common& c, int argc,
                 char** argv) {
  RunConfig rc = config_of(c);
  if (c.seed) rc.pretrain.seed = *c.seed;
  if (steps) rc.pretrain.total_steps = *steps;
  rc.pretrain.validate();
  const KnowledgeStore store = load_triples(kb_path);
  const StringEmbedder embedder = make_embedder(rc);
  EncoderModel model(rc.encoder, rc.pretrain.seed);
  const fs::path dir = out_dir(c);
  std::ofstream log(dir / "loss.csv");
  PretrainOutputs outputs;
  outputs.checkpoint_dir = dir;
  outputs.loss_log = &log;
  const PretrainResult result = pretrain(store, model, embedder, rc.pretrain, outputs);
  log.close();
  Manifest m("pretrain", argc, argv);
  m.set("seed", rc.pretrain.seed);
  m.set("config_hash", config_hash(rc));
  m.set("parameter_count", parameter_count(model));
  m.input(kb_path);
  for (const auto& p : result.written) m.output(p);
  m.output(dir / "loss.csv");
  if (!result.written.empty()) m.set("checkpoint", file_digest(result.written.back()));
  m.write(dir);
  if (!result.trace.empty()) {
    std::cout << "final loss " << result.trace.back().loss << " at step " << result.trace.back().step << "\n";
  }
  if (!result.written.empty()) std::cout << "checkpoint " << result.written.back().string() << '\n';
  return 0;
}

int cmd_featurize(const std::string& csv, const std::string& model_path, std::optional<int> dim,
                  const std::string& target, const std::string& id_column, const Common& c, int argc, char** argv) {
  const RunConfig rc = config_of(c);
  const Backbone b = load_backbone(model_path, rc);
  const TableInput t = read_table(csv, target, "reg", id_column);
  const int q = dim.value_or(b.model->config().d_model);
  const TablePreprocessor pre(t.schema, t.table, all_rows(t.table.n_rows()), *b.embedder);
  const FeatureMatrix f = featurize(*b.model, pre.rows(t.table), q);
  const fs::path dir = out_dir(c);
  write_feature_cache(dir / "features.bin", f, b.id);
  Manifest m("featurize", argc, argv);
  m.set("checkpoint", b.id);
  m.set("dim", q);
  m.set("config_hash", config_hash(rc));
  m.input(csv);
  m.input(model_path);
  m.output(dir / "features.bin");
  m.write(dir);
  std::cout << "features " << f.values.rows() << " x " << f.values.cols() << '\n';
  return 0;
}

struct FitOptions {
  std::string target;
  std::string task = "reg";
  std::string method = "ridge";
  std::string model;
  std::optional<int> dim;
  std::optional<int> train_size;
  int split_index = 0;
  std::string base_preds;
  std::string sources;
  std::string residual_space = "probability";
  std::string id_column;
};

FitInputs fit_inputs(const FitOptions& o, const RunConfig& rc, const TableInput& t, const Backbone& b,
                     std::optional<std::uint64_t> seed) {
  FitInputs in;
  in.table = &t.table;
  in.schema = &t.schema;
  in.y = &t.y;
  in.method = method_from_string(o.method);
  in.space = residual_space_from_string(o.residual_space);
  in.backbone = b.model;
  in.embedder = b.embedder;
  in.backbone_id = b.id;
  in.dim = o.dim.value_or(b.model ? b.model->config().d_model : 0);
  in.finetune = rc.finetune;
  if (seed) in.finetune.seed = *seed;
  if (!o.base_preds.empty()) in.base = align_predictions(read_predictions(o.base_preds), t.ids);
  for (const auto& s : split_list(o.sources)) {
    FittedModel src = load_fitted(s, rc.lookup);
    if (!src.finetuned) throw UsageError(s + " is not a fine-tuned model (fit one with --method finetune)");
    in.sources.push_back(std::move(*src.finetuned));
  }
  if (!in.sources.empty() && in.method != Method::Specialize) {
    throw UsageError("--sources only applies to --method specialize");
  }
  return in;
}

int cmd_fit(const std::string& csv, const FitOptions& o, const Common& c, int argc, char** argv) {
  const RunConfig rc = config_of(c);
  if (o.target.empty()) throw UsageError("fit needs --target");
  const TableInput t = read_table(csv, o.target, o.task, o.id_column);
  Backbone b;
  if (!o.model.empty()) b = load_backbone(o.model, rc);
  FitInputs in = fit_inputs(o, rc, t, b, c.seed);
  Split split;
  if (o.train_size) {
    split = make_split(t.table.n_rows(), {*o.train_size, c.seed.value_or(0), o.split_index},
                       t.schema.task == TaskKind::Classification ? &t.y : nullptr);
  } else {
    split.train = all_rows(t.table.n_rows());
  }
  in.train = split.train;
  const auto start = std::chrono::steady_clock::now();
  const FittedModel fitted = fit_method(in);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const fs::path dir = out_dir(c);
  save_fitted(dir / "fitted.ckpt", fitted);
  // Predictions go through the saved file so `predict` sees the same model.
  FittedModel reloaded = load_fitted(dir / "fitted.ckpt", rc.lookup);
  if (reloaded.preprocessor) reloaded.preprocessor->bind(t.table);
  if (reloaded.vectorizer) reloaded.vectorizer->bind(t.table);
  write_preds(dir / "train_predictions.csv", t.ids, split.train,
              predict_rows(reloaded, t.table, split.train, in.base));
  Manifest m("fit", argc, argv);
  m.set("seed", c.seed.value_or(0));
  m.set("config_hash", config_hash(rc));
  m.set("checkpoint", b.id);
  m.set("method", o.method);
  m.set("fit_seconds", seconds);
  m.input(csv);
  if (!o.model.empty()) m.input(o.model);
  if (!o.base_preds.empty()) m.input(o.base_preds);
  for (const auto& s : split_list(o.sources)) m.input(s);
  m.output(dir / "fitted.ckpt");
  m.output(dir / "train_predictions.csv");
  if (!split.test.empty()) {
    const VectorXd pred = predict_rows(reloaded, t.table, split.test, in.base);
    write_preds(dir / "test_predictions.csv", t.ids, split.test, pred);
    std::vector<double> yt;
    for (std::size_t i : split.test) yt.push_back(t.y[i]);
    const double value = evaluate_metric(t.schema.task, yt, std::vector<double>(pred.data(), pred.data() + pred.size()));
    const std::string metric = t.schema.task == TaskKind::Regression ? "r2" : "auroc";
    std::ofstream(dir / "metrics.json") << json{{"metric", metric}, {"value", value}}.dump(2) << '\n';
    m.output(dir / "test_predictions.csv");
    m.output(dir / "metrics.json");
    std::cout << metric << " " << fixed(value) << '\n';
  }
  m.write(dir);
  return 0;
}

int cmd_predict(const std::string& csv, const std::string& model, const std::string& base_preds,
                const std::string& id_column, const Common& c, int argc, char** argv) {
  const RunConfig rc = config_of(c);
  FittedModel fitted = load_fitted(model, rc.lookup);
  const TableInput t = read_table(csv, "", "reg", id_column);
  if (fitted.preprocessor) fitted.preprocessor->bind(t.table);
  if (fitted.vectorizer) fitted.vectorizer->bind(t.table);
  std::optional<VectorXd> base;
  if (!base_preds.empty()) base = align_predictions(read_predictions(base_preds), t.ids);
  const auto rows = all_rows(t.table.n_rows());
  const fs::path dir = out_dir(c);
  write_preds(dir / "predictions.csv", t.ids, rows, predict_rows(fitted, t.table, rows, base));
  Manifest m("predict", argc, argv);
  m.set("checkpoint", fitted.backbone_id);
  m.input(csv);
  m.input(model);
  if (!base_preds.empty()) m.input(base_preds);
  m.output(dir / "predictions.csv");
  m.write(dir);
  return 0;
}

int cmd_evaluate(const std::string& csv, const FitOptions& o, const std::string& methods, const std::string& sizes,
                 int splits, std::string dataset, const Common& c, int argc, char** argv) {
  const RunConfig rc = config_of(c);
  if (o.target.empty()) throw UsageError("evaluate needs --target");
  const TableInput t = read_table(csv, o.target, o.task, o.id_column);
  Backbone b;
  if (!o.model.empty()) b = load_backbone(o.model, rc);
  if (dataset.empty()) dataset = fs::path(csv).stem().string();
  std::vector<int> size_list;
  for (const auto& s : split_list(sizes)) size_list.push_back(std::stoi(s));
  if (size_list.empty()) {
    for (int s : kTrainSizes) {
      if (static_cast<std::size_t>(s) < t.table.n_rows()) size_list.push_back(s);
    }
  }
  const std::string metric = t.schema.task == TaskKind::Regression ? "r2" : "auroc";
  std::vector<EvalRecord> records;
  for (int size : size_list) {
    for (int split_index = 0; split_index < splits; ++split_index) {
      const Split split = make_split(t.table.n_rows(), {size, c.seed.value_or(0), split_index},
                                     t.schema.task == TaskKind::Classification ? &t.y : nullptr);
      std::vector<double> yt;
      for (std::size_t i : split.test) yt.push_back(t.y[i]);
      for (const auto& method : split_list(methods)) {
        FitOptions mo = o;
        mo.method = method;
        FitInputs in = fit_inputs(mo, rc, t, b, c.seed);
        in.train = split.train;
        const auto start = std::chrono::steady_clock::now();
        const FittedModel fitted = fit_method(in);
        const VectorXd pred = predict_rows(fitted, t.table, split.test, in.base);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        records.push_back({dataset, method, size, split_index, metric,
                           evaluate_metric(t.schema.task, yt, std::vector<double>(pred.data(), pred.data() + pred.size())),
                           seconds});
        std::cout << dataset << " " << method << " n=" << size << " split=" << split_index << " " << metric << "="
                  << records.back().value << '\n';
      }
    }
  }
  const fs::path dir = out_dir(c);
  {
    std::ofstream out(dir / "records.csv");
    write_records(out, records);
  }
  Manifest m("evaluate", argc, argv);
  m.set("seed", c.seed.value_or(0));
  m.set("config_hash", config_hash(rc));
  m.set("checkpoint", b.id);
  m.input(csv);
  if (!o.model.empty()) m.input(o.model);
  m.output(dir / "records.csv");
  m.write(dir);
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const Common& c, int argc, char** argv) {
  std::vector<EvalRecord> records;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    auto r = read_records(in, path);
    records.insert(records.end(), r.begin(), r.end());
  }
  const auto scores = normalize_scores(records);
  const auto ranks = average_ranks(records);
  // One Pareto point per method: mean runtime of a fit against mean score.
  std::map<std::string, std::pair<double, int>> runtime, score;
  for (const auto& r : records) {
    runtime[r.method].first += r.seconds;
    runtime[r.method].second += 1;
  }
  for (const auto& s : scores) {
    score[s.method].first += s.score;
    score[s.method].second += 1;
  }
  std::vector<ParetoPoint> points;
  for (const auto& [method, rt] : runtime) {
    points.push_back({method, rt.first / rt.second, score[method].first / score[method].second});
  }
  const fs::path dir = out_dir(c);
  Manifest m("report", argc, argv);
  for (const auto& p : inputs) m.input(p);
  {
    std::ofstream out(dir / "scores.csv");
    write_scores(out, scores);
  }
  {
    std::ofstream out(dir / "ranks.csv");
    write_ranks(out, ranks);
  }
  {
    std::ofstream out(dir / "pareto.csv");
    write_pareto(out, pareto_frontier(points));
  }
  for (const char* f : {"scores.csv", "ranks.csv", "pareto.csv"}) m.output(dir / f);
  m.write(dir);
  for (const auto& [method, r] : ranks) std::cout << method << " average rank " << r << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tartekit: knowledge-pretrained table encoder toolkit"};
  app.require_subcommand(1);

  Common kb_c, toy_c, pre_c, feat_c, fit_c, pred_c, eval_c, rep_c;
  std::string kb_path;
  auto* kb = app.add_subcommand("kb-stats", "Count entities, relations and facts of a triple file");
  kb->add_option("triples", kb_path, "Triple TSV file")->required()->check(CLI::ExistingFile);
  add_common(kb, kb_c, false);

  int toy_entities = 200, toy_clusters = 2;
  auto* toy = app.add_subcommand("toy-kb", "Write a synthetic clustered triple file");
  toy->add_option("--entities", toy_entities, "Number of entities");
  toy->add_option("--clusters", toy_clusters, "Number of latent clusters");
  add_common(toy, toy_c, true);

  std::string pre_kb;
  std::optional<std::int64_t> pre_steps;
  auto* pre = app.add_subcommand("pretrain", "Contrastive pre-training on a triple file");
  pre->add_option("--kb", pre_kb, "Triple TSV file")->required()->check(CLI::ExistingFile);
  pre->add_option("--steps", pre_steps, "Total steps (overrides the config)");
  add_common(pre, pre_c, true);

  std::string feat_csv, feat_model, feat_target, feat_id;
  std::optional<int> feat_dim;
  auto* feat = app.add_subcommand("featurize", "Embed table rows with a frozen checkpoint");
  feat->add_option("table", feat_csv, "CSV table")->required()->check(CLI::ExistingFile);
  feat->add_option("--model", feat_model, "Pretrained checkpoint")->required()->check(CLI::ExistingFile);
  feat->add_option("--dim", feat_dim, "Output width: d_model or a projection dim");
  feat->add_option("--target", feat_target, "Column to leave out of the features");
  feat->add_option("--id-column", feat_id, "Column holding row ids (left out of the features)");
  add_common(feat, feat_c, true);

  std::string fit_csv;
  FitOptions fit_o;
  auto add_fit_options = [](CLI::App* cmd, FitOptions& o) {
    cmd->add_option("--target", o.target, "Target column")->required();
    cmd->add_option("--task", o.task, "reg or clf")->check(CLI::IsMember({"reg", "clf"}));
    cmd->add_option("--model", o.model, "Pretrained checkpoint")->check(CLI::ExistingFile);
    cmd->add_option("--dim", o.dim, "Feature width: d_model or a projection dim");
    cmd->add_option("--base-preds", o.base_preds, "CSV row_id,prediction from an external base model")
        ->check(CLI::ExistingFile);
    cmd->add_option("--sources", o.sources, "Comma-separated fine-tuned models (specialize)");
    cmd->add_option("--residual-space", o.residual_space, "probability or logit")
        ->check(CLI::IsMember({"probability", "logit"}));
    cmd->add_option("--id-column", o.id_column, "Column holding row ids");
  };
  auto* fit = app.add_subcommand("fit", "Fit a downstream model on a table");
  fit->add_option("table", fit_csv, "CSV table")->required()->check(CLI::ExistingFile);
  add_fit_options(fit, fit_o);
  fit->add_option("--method", fit_o.method, "baseline, ridge, finetune, boost or specialize");
  fit->add_option("--train-size", fit_o.train_size, "Rows in the train split (default: all rows)");
  fit->add_option("--split-index", fit_o.split_index, "Split index for --train-size");
  add_common(fit, fit_c, true);

  std::string pred_csv, pred_model, pred_base, pred_id;
  auto* pred = app.add_subcommand("predict", "Score a table with a model written by fit");
  pred->add_option("table", pred_csv, "CSV table")->required()->check(CLI::ExistingFile);
  pred->add_option("--model", pred_model, "fitted.ckpt from fit")->required()->check(CLI::ExistingFile);
  pred->add_option("--base-preds", pred_base, "External base predictions")->check(CLI::ExistingFile);
  pred->add_option("--id-column", pred_id, "Column holding row ids");
  add_common(pred, pred_c, true);

  std::string eval_csv, eval_methods = "baseline,ridge,boost", eval_sizes, eval_dataset;
  int eval_splits = kSplitsPerSize;
  FitOptions eval_o;
  auto* eval = app.add_subcommand("evaluate", "Run methods over train sizes and splits, write records.csv");
  eval->add_option("table", eval_csv, "CSV table")->required()->check(CLI::ExistingFile);
  add_fit_options(eval, eval_o);
  eval->add_option("--methods", eval_methods, "Comma-separated methods");
  eval->add_option("--sizes", eval_sizes, "Comma-separated train sizes (default: the standard grid below n)");
  eval->add_option("--splits", eval_splits, "Splits per train size");
  eval->add_option("--dataset", eval_dataset, "Dataset id for the records (default: file stem)");
  add_common(eval, eval_c, true);

  std::vector<std::string> rep_inputs;
  auto* rep = app.add_subcommand("report", "Normalized scores, average ranks and Pareto frontier");
  rep->add_option("records", rep_inputs, "records.csv files")->required()->check(CLI::ExistingFile);
  add_common(rep, rep_c, true);

  CLI11_PARSE(app, argc, argv);
  try {
    if (kb->parsed()) return cmd_kb_stats(kb_path, kb_c, argc, argv);
    if (toy->parsed()) return cmd_toy_kb(toy_entities, toy_clusters, toy_c, argc, argv);
    if (pre->parsed()) return cmd_pretrain(pre_kb, pre_steps, pre_c, argc, argv);
    if (feat->parsed()) return cmd_featurize(feat_csv, feat_model, feat_dim, feat_target, feat_id, feat_c, argc, argv);
    if (fit->parsed()) return cmd_fit(fit_csv, fit_o, fit_c, argc, argv);
    if (pred->parsed()) return cmd_predict(pred_csv, pred_model, pred_base, pred_id, pred_c, argc, argv);
    if (eval->parsed()) {
      return cmd_evaluate(eval_csv, eval_o, eval_methods, eval_sizes, eval_splits, eval_dataset, eval_c, argc, argv);
    }
    if (rep->parsed()) return cmd_report(rep_inputs, rep_c, argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
