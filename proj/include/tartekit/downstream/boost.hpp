#pragma once

#include <string>
#include <vector>

#include "tartekit/downstream/finetune.hpp"
#include "tartekit/downstream/ridge.hpp"

namespace tartekit {

// Where classification residuals are fitted. Probability: r = y - p and the
// sum is clipped to [0,1]. Logit: the same y - p (the log-loss gradient) is
// fitted but added on the logit scale, a unit-step gradient boosting update.
enum class ResidualSpace { Probability, Logit };
std::string to_string(ResidualSpace s);
ResidualSpace residual_space_from_string(const std::string& s);

struct BoostStage {
  std::string source;  // which featurizer produced the stage's features
  RidgeModel ridge;
};

struct BoostedModel {
  TaskKind task = TaskKind::Regression;
  ResidualSpace space = ResidualSpace::Probability;
  std::vector<BoostStage> stages;  // in application order

  // base plus every stage's correction; features[s] feeds stages[s].
  VectorXd predict(const VectorXd& base, const std::vector<MatrixXd>& features) const;
};

struct BoostResult {
  BoostedModel model;
  VectorXd train_predictions;
  VectorXd test_predictions;
  std::vector<double> train_residual_mse;  // after each stage
};

// Fits one ridge per feature source on the residuals left by the base and
// the earlier stages. An empty chain returns the base predictions.
BoostResult boost_chain(const VectorXd& base_train, const VectorXd& base_test,
                        const std::vector<MatrixXd>& train_features, const std::vector<MatrixXd>& test_features,
                        const VectorXd& y_train, TaskKind task,
                        ResidualSpace space = ResidualSpace::Probability,
                        const std::vector<std::string>& sources = {},
                        const std::vector<double>& alphas = kDefaultAlphas);

BoostResult boost(const VectorXd& base_train, const VectorXd& base_test, const MatrixXd& train_features,
                  const MatrixXd& test_features, const VectorXd& y_train, TaskKind task,
                  ResidualSpace space = ResidualSpace::Probability, const std::vector<double>& alphas = kDefaultAlphas);

// Residuals fitted in turn with each source model's featurizer, in the given
// order. Without sources the pretrained backbone's readout is used instead.
BoostResult specialize_and_boost(const EncoderModel& pretrained, const std::vector<CellPairSequence>& train_rows,
                                 const std::vector<CellPairSequence>& test_rows, const VectorXd& base_train,
                                 const VectorXd& base_test, const VectorXd& y_train, TaskKind task,
                                 const std::vector<const FineTunedModel*>& sources,
                                 ResidualSpace space = ResidualSpace::Probability);

}  // namespace tartekit
