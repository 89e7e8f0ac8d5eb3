#include <algorithm>
#include <cmath>

#include "tartekit/downstream/boost.hpp"

namespace tartekit {

namespace {

constexpr double kProbabilityFloor = 1e-6;

double clamp_probability(double p) { return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor); }

// Applies one stage's correction to the running predictions.
VectorXd apply_stage(TaskKind task, ResidualSpace space, const VectorXd& current, const VectorXd& correction) {
  if (task == TaskKind::Regression) return current + correction;
  if (space == ResidualSpace::Probability) return (current + correction).cwiseMax(0.0).cwiseMin(1.0);
  VectorXd out(current.size());
  for (Eigen::Index i = 0; i < current.size(); ++i) {
    const double p = clamp_probability(current[i]);
    out[i] = 1.0 / (1.0 + std::exp(-(std::log(p / (1.0 - p)) + correction[i])));
  }
  return out;
}

void check_base(TaskKind task, const VectorXd& base, const char* what) {
  if (!base.allFinite()) throw NumericError(std::string("boost: non-finite ") + what + " predictions");
  if (task == TaskKind::Classification && (base.minCoeff() < 0.0 || base.maxCoeff() > 1.0)) {
    throw InvalidArgument(std::string("boost: ") + what + " predictions must be probabilities in [0, 1]");
  }
}

}  // namespace

std::string to_string(ResidualSpace s) { return s == ResidualSpace::Probability ? "probability" : "logit"; }

ResidualSpace residual_space_from_string(const std::string& s) {
  if (s == "probability" || s == "prob") return ResidualSpace::Probability;
  if (s == "logit") return ResidualSpace::Logit;
  throw InvalidArgument("unknown residual space '" + s + "' (expected probability or logit)");
}

VectorXd BoostedModel::predict(const VectorXd& base, const std::vector<MatrixXd>& features) const {
  if (features.size() != stages.size()) {
    throw DimensionError("boosted model has " + std::to_string(stages.size()) + " stages but " +
                         std::to_string(features.size()) + " feature matrices were given");
  }
  VectorXd current = base;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    if (features[s].rows() != base.size()) throw DimensionError("boost: features and base predictions differ in length");
    current = apply_stage(task, space, current, stages[s].ridge.predict(features[s]));
  }
  return current;
}

BoostResult boost_chain(const VectorXd& base_train, const VectorXd& base_test,
                        const std::vector<MatrixXd>& train_features, const std::vector<MatrixXd>& test_features,
                        const VectorXd& y_train, TaskKind task, ResidualSpace space,
                        const std::vector<std::string>& sources, const std::vector<double>& alphas) {
  if (base_train.size() != y_train.size()) {
    throw DimensionError("boost: " + std::to_string(base_train.size()) + " base train predictions for " +
                         std::to_string(y_train.size()) + " targets");
  }
  if (train_features.size() != test_features.size()) throw DimensionError("boost: train/test source counts differ");
  if (!sources.empty() && sources.size() != train_features.size()) {
    throw DimensionError("boost: one source name per feature matrix is needed");
  }
  check_base(task, base_train, "base train");
  check_base(task, base_test, "base test");

  BoostResult out;
  out.model.task = task;
  out.model.space = space;
  out.train_predictions = base_train;
  out.test_predictions = base_test;
  for (std::size_t s = 0; s < train_features.size(); ++s) {
    const MatrixXd& ftr = train_features[s];
    const MatrixXd& fte = test_features[s];
    if (ftr.rows() != y_train.size() || fte.rows() != base_test.size()) {
      throw DimensionError("boost: stage " + std::to_string(s) + " features do not align with the predictions");
    }
    if (ftr.cols() != fte.cols()) throw DimensionError("boost: train and test features differ in width");
    BoostStage stage;
    stage.source = sources.empty() ? "stage" + std::to_string(s) : sources[s];
    // y - p serves both spaces: in logit mode it is the log-loss gradient.
    stage.ridge = fit_ridge_loocv(ftr, y_train - out.train_predictions, alphas);
    out.train_predictions = apply_stage(task, space, out.train_predictions, stage.ridge.predict(ftr));
    out.test_predictions = apply_stage(task, space, out.test_predictions, stage.ridge.predict(fte));
    out.train_residual_mse.push_back((y_train - out.train_predictions).squaredNorm() /
                                     static_cast<double>(y_train.size()));
    out.model.stages.push_back(std::move(stage));
  }
  return out;
}

BoostResult boost(const VectorXd& base_train, const VectorXd& base_test, const MatrixXd& train_features,
                  const MatrixXd& test_features, const VectorXd& y_train, TaskKind task, ResidualSpace space,
                  const std::vector<double>& alphas) {
  return boost_chain(base_train, base_test, {train_features}, {test_features}, y_train, task, space, {"backbone"},
                     alphas);
}

BoostResult specialize_and_boost(const EncoderModel& pretrained, const std::vector<CellPairSequence>& train_rows,
                                 const std::vector<CellPairSequence>& test_rows, const VectorXd& base_train,
                                 const VectorXd& base_test, const VectorXd& y_train, TaskKind task,
                                 const std::vector<const FineTunedModel*>& sources, ResidualSpace space) {
  const int d = pretrained.config().d_model;
  if (sources.empty()) {
    return boost(base_train, base_test, featurize(pretrained, train_rows, d).with_missing_flag(),
                 featurize(pretrained, test_rows, d).with_missing_flag(), y_train, task, space);
  }
  std::vector<MatrixXd> ftr, fte;
  std::vector<std::string> names;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const EncoderConfig& c = sources[s]->backbone->config();
    if (c.d_lm != pretrained.config().d_lm || c.d_model != d) {
      throw DimensionError("source " + std::to_string(s) + " has d_lm=" + std::to_string(c.d_lm) + ", d=" +
                           std::to_string(c.d_model) + " but the target setup uses d_lm=" +
                           std::to_string(pretrained.config().d_lm) + ", d=" + std::to_string(d));
    }
    ftr.push_back(sources[s]->featurize(train_rows).with_missing_flag());
    fte.push_back(sources[s]->featurize(test_rows).with_missing_flag());
    names.push_back("source" + std::to_string(s));
  }
  return boost_chain(base_train, base_test, ftr, fte, y_train, task, space, names);
}

}  // namespace tartekit
