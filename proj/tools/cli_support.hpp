#pragma once

// Pieces shared by the tartekit subcommands: JSON config, the fitted-model
// file written by `fit`, method runners and run manifests.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tartekit/downstream/boost.hpp"
#include "tartekit/downstream/features.hpp"
#include "tartekit/downstream/finetune.hpp"
#include "tartekit/downstream/vectorizer.hpp"
#include "tartekit/pretrain/trainer.hpp"

namespace tartekit::cli {

using nlohmann::json;
namespace fs = std::filesystem;

class UsageError : public Error {
 public:
  using Error::Error;
};

// Sections of a config file; every key is optional and unknown keys are
// rejected so typos do not pass silently.
struct RunConfig {
  EncoderConfig encoder;
  NgramOptions ngrams;
  std::optional<fs::path> lookup;  // token vectors for the string embedder
  PretrainConfig pretrain;
  FineTuneConfig finetune;
  json source = json::object();  // the file as read, for hashing
};

RunConfig load_config(const std::optional<fs::path>& path);
StringEmbedder make_embedder(const RunConfig& config);

enum class Method { Baseline, Ridge, FineTune, Boost, Specialize };
std::string to_string(Method m);
Method method_from_string(const std::string& s);

// Everything `predict` needs to score new rows of a table.
struct FittedModel {
  Method method = Method::Ridge;
  TaskKind task = TaskKind::Regression;
  std::string target;
  int dim = 0;
  ResidualSpace space = ResidualSpace::Probability;
  bool external_base = false;
  std::string backbone_id;  // digest of the checkpoint the model started from

  std::shared_ptr<const EncoderModel> backbone;
  std::shared_ptr<const StringEmbedder> embedder;
  std::optional<TablePreprocessor> preprocessor;
  std::optional<RidgeModel> ridge;
  std::optional<FineTunedModel> finetuned;
  std::optional<TableVectorizer> vectorizer;  // built-in base
  std::optional<RidgeModel> base_ridge;
  std::optional<BoostedModel> boosted;
  std::vector<FineTunedModel> sources;
};

void save_fitted(const fs::path& path, const FittedModel& m);
// `lookup` reloads the token table the model was fitted with, if any.
FittedModel load_fitted(const fs::path& path, const std::optional<fs::path>& lookup = std::nullopt);

// Predictions for the given rows of `table`. `base` holds external base
// predictions for every row of the table when the model needs them.
VectorXd predict_rows(const FittedModel& m, const Table& table, const std::vector<std::size_t>& rows,
                      const std::optional<VectorXd>& base);

struct FitInputs {
  const Table* table = nullptr;
  const TableSchema* schema = nullptr;
  const std::vector<double>* y = nullptr;
  std::vector<std::size_t> train;
  Method method = Method::Ridge;
  int dim = 0;
  ResidualSpace space = ResidualSpace::Probability;
  std::shared_ptr<const EncoderModel> backbone;
  std::shared_ptr<const StringEmbedder> embedder;
  std::string backbone_id;
  FineTuneConfig finetune;
  std::optional<VectorXd> base;  // external base predictions, all rows
  std::vector<FineTunedModel> sources;
};

FittedModel fit_method(const FitInputs& in);

// External base predictions aligned to table rows through their ids.
VectorXd align_predictions(const Predictions& p, const std::vector<std::string>& row_ids);

// Row ids: the id column when given, otherwise the 0-based data row number.
std::vector<std::string> row_ids(const Table& table, const std::string& id_column);

double evaluate_metric(TaskKind task, const std::vector<double>& y, const std::vector<double>& pred);

std::vector<std::string> split_list(const std::string& s);

// Run directory manifest: command line, seed, config hash, input and output
// digests. Output digests are taken when write() is called.
class Manifest {
 public:
  Manifest(std::string command, int argc, char** argv);
  void set(const std::string& key, json value) { doc_[key] = std::move(value); }
  void input(const fs::path& p);
  void output(const fs::path& p);
  void write(const fs::path& dir) const;

 private:
  json doc_;
  std::vector<fs::path> outputs_;
};

std::string config_hash(const RunConfig& config);

}  // namespace tartekit::cli
