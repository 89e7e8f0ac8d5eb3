#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "tartekit/downstream/boost.hpp"
#include "tartekit/downstream/features.hpp"
#include "tartekit/downstream/finetune.hpp"
#include "tartekit/downstream/ridge.hpp"
#include "tartekit/downstream/vectorizer.hpp"

namespace tartekit {
namespace {

namespace fs = std::filesystem;

EncoderConfig micro_config() {
  EncoderConfig c;
  c.d_lm = 12;
  c.d_model = 8;
  c.layers = 2;
  c.heads = 2;
  c.d_ff = 16;
  c.projection_hidden = 10;
  c.matryoshka_dims = {4, 8};
  return c;
}

MatrixXd gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

VectorXd gaussian_vector(Eigen::Index n, std::mt19937_64& rng) { return gaussian(n, 1, rng).col(0); }

// Brute-force leave-one-out: standardize with all rows (as the closed form
// does), then refit the intercept and weights without row i by the normal
// equations and predict row i.
VectorXd brute_force_loo(const MatrixXd& X, const VectorXd& y, double alpha) {
  const Eigen::Index n = X.rows(), q = X.cols();
  const Eigen::RowVectorXd mean = X.colwise().mean();
  Eigen::MatrixXd Z = X.rowwise() - mean;
  for (Eigen::Index j = 0; j < q; ++j) {
    const double sd = std::sqrt(Z.col(j).squaredNorm() / static_cast<double>(n));
    if (sd > 1e-12 * (1.0 + std::abs(mean(j)))) Z.col(j) /= sd;
  }
  VectorXd e(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::MatrixXd Zi(n - 1, q);
    VectorXd yi(n - 1);
    for (Eigen::Index r = 0, k = 0; r < n; ++r) {
      if (r == i) continue;
      Zi.row(k) = Z.row(r);
      yi[k++] = y[r];
    }
    const Eigen::RowVectorXd zm = Zi.colwise().mean();
    const double ym = yi.mean();
    const Eigen::MatrixXd Zc = Zi.rowwise() - zm;
    const Eigen::MatrixXd A = Zc.transpose() * Zc + alpha * Eigen::MatrixXd::Identity(q, q);
    const VectorXd w = A.ldlt().solve(Zc.transpose() * (yi.array() - ym).matrix());
    e[i] = y[i] - (ym + (Z.row(i) - zm).dot(w));
  }
  return e;
}

TEST(Ridge, DefaultGrid) { EXPECT_EQ(kDefaultAlphas, (std::vector<double>{1e-2, 1e-1, 1.0, 1e1, 1e2})); }

TEST(Ridge, ClosedFormLooMatchesBruteForce) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> n_dist(3, 50), q_dist(1, 10);
  for (int problem = 0; problem < 20; ++problem) {
    const int n = n_dist(rng), q = q_dist(rng);
    MatrixXd X = gaussian(n, q, rng);
    X.col(0) *= 100.0;  // uneven scales exercise the standardization
    const VectorXd y = gaussian_vector(n, rng);
    const MatrixXd closed = loo_residuals(X, y, kDefaultAlphas);
    for (std::size_t a = 0; a < kDefaultAlphas.size(); ++a) {
      const VectorXd brute = brute_force_loo(X, y, kDefaultAlphas[a]);
      EXPECT_LT((closed.col(static_cast<Eigen::Index>(a)) - brute).cwiseAbs().maxCoeff(), 1e-8)
          << "problem " << problem << " n=" << n << " q=" << q << " alpha=" << kDefaultAlphas[a];
    }
  }
}

TEST(Ridge, ChoosesSmallestLooError) {
  std::mt19937_64 rng(5);
  const MatrixXd X = gaussian(30, 5, rng);
  const VectorXd y = gaussian_vector(30, rng);
  const RidgeModel m = fit_ridge_loocv(X, y);
  ASSERT_EQ(m.loo_mse.size(), kDefaultAlphas.size());
  const auto best = std::min_element(m.loo_mse.begin(), m.loo_mse.end()) - m.loo_mse.begin();
  EXPECT_EQ(m.alpha, kDefaultAlphas[static_cast<std::size_t>(best)]);
  for (std::size_t a = 0; a < kDefaultAlphas.size(); ++a) {
    const VectorXd e = brute_force_loo(X, y, kDefaultAlphas[a]);
    EXPECT_NEAR(m.loo_mse[a], e.squaredNorm() / 30.0, 1e-10);
  }
}

TEST(Ridge, RealizableTarget) {
  std::mt19937_64 rng(2);
  const MatrixXd X = gaussian(20, 3, rng);
  Eigen::Vector3d beta(0.5, -0.3, 0.2);
  const VectorXd y = (X * beta).array() + 1.5;
  const RidgeModel m = fit_ridge_loocv(X, y);
  EXPECT_EQ(m.alpha, 1e-2);
  EXPECT_LT(m.loo_mse.front(), 1e-6);
  EXPECT_LT((m.predict(X) - y).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Ridge, ConstantTarget) {
  std::mt19937_64 rng(3);
  const MatrixXd X = gaussian(15, 4, rng);
  const VectorXd y = VectorXd::Constant(15, 2.5);
  const RidgeModel m = fit_ridge_loocv(X, y);
  EXPECT_LT(m.weights.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_DOUBLE_EQ(m.intercept, 2.5);
}

TEST(Ridge, ConstantFeatureAndErrors) {
  std::mt19937_64 rng(4);
  MatrixXd X = gaussian(10, 3, rng);
  X.col(1).setConstant(7.0);
  const VectorXd y = gaussian_vector(10, rng);
  const RidgeModel m = fit_ridge_loocv(X, y);
  EXPECT_EQ(m.feature_scale[1], 1.0);
  EXPECT_EQ(m.weights[1], 0.0);
  EXPECT_THROW(fit_ridge_loocv(X.topRows(2), y.head(2)), InvalidArgument);
  EXPECT_THROW(fit_ridge_loocv(X, y.head(9)), DimensionError);
  EXPECT_THROW(fit_ridge_loocv(X, y, {0.0}), InvalidArgument);
  EXPECT_THROW(m.predict(X.leftCols(2)), DimensionError);
}

// A small mixed table: a string column whose value carries a cluster, a
// number, a date and some gaps.
Table toy_table(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::vector<std::string> a{"Paris", "Lyon", "Nice", "Lille"};
  const std::vector<std::string> b{"Tokyo", "Osaka", "Kyoto", "Nagoya"};
  std::uniform_int_distribution<int> pick(0, 3), coin(0, 1);
  std::normal_distribution<double> noise;
  Table t;
  t.header = {"city", "size", "opened", "y"};
  for (int i = 0; i < n; ++i) {
    const int c = coin(rng);
    const std::string city = (c ? b : a)[static_cast<std::size_t>(pick(rng))];
    const double size = std::exp(3.0 + noise(rng));
    const int year = 1950 + static_cast<int>(40 * std::abs(noise(rng)));
    std::string opened = std::to_string(year) + "-06-01";
    if (i % 7 == 3) opened = "NA";
    const double y = 2.0 * c + 0.3 * std::log(size) + 0.1 * noise(rng);
    t.rows.push_back({city, std::to_string(size), opened, std::to_string(y)});
  }
  return t;
}

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

TEST(Preprocessor, TransformsSeeTrainRowsOnly) {
  StringEmbedder emb(12);
  Table t = toy_table(40, 1);
  const TableSchema schema = infer_schema(t, "y");
  ASSERT_EQ(schema.features.size(), 3u);
  EXPECT_EQ(schema.features[1].kind, ColumnKind::Numerical);
  EXPECT_EQ(schema.features[2].kind, ColumnKind::Datetime);
  std::vector<std::size_t> train(20);
  std::iota(train.begin(), train.end(), 0);
  const TablePreprocessor a(schema, t, train, emb);
  for (std::size_t i = 20; i < 40; ++i) t.rows[i][1] = "1e9";
  const TablePreprocessor b(schema, t, train, emb);
  EXPECT_EQ(a.specs()[1].transform->lambda, b.specs()[1].transform->lambda);
  EXPECT_EQ(a.specs()[1].transform->mean, b.specs()[1].transform->mean);
  EXPECT_FALSE(a.specs()[0].transform.has_value());
}

TEST(Preprocessor, MissingAndUnparseableCellsAreSkipped) {
  StringEmbedder emb(12);
  Table t = toy_table(10, 2);
  const TableSchema schema = infer_schema(t, "y");
  const TablePreprocessor p(schema, t, iota_rows(10), emb);
  EXPECT_EQ(p.row(t, 3).pairs.size(), 2u);  // opened is NA
  t.rows[0][1] = "big";
  EXPECT_EQ(p.row(t, 0).pairs.size(), 2u);
  t.rows[0] = {"", "NA", "null", "0"};
  EXPECT_TRUE(p.row(t, 0).pairs.empty());
}

TEST(Featurize, ShapeDeterminismAndMissingRows) {
  StringEmbedder emb(12);
  const EncoderModel model(micro_config(), 3);
  Table t = toy_table(5, 3);
  t.rows[4] = {"", "NA", "", "1"};
  const TableSchema schema = infer_schema(t, "y");
  const TablePreprocessor p(schema, t, iota_rows(5), emb);
  const auto rows = p.rows(t);
  const FeatureMatrix f = featurize(model, rows, 8);
  EXPECT_EQ(f.values.rows(), 5);
  EXPECT_EQ(f.values.cols(), 8);
  EXPECT_EQ(f.missing, (std::vector<char>{0, 0, 0, 0, 1}));
  EXPECT_EQ(f.values.row(4).norm(), 0.0);
  EXPECT_EQ(f.with_missing_flag().cols(), 9);
  EXPECT_EQ(f.with_missing_flag()(4, 8), 1.0);
  EXPECT_EQ(featurize(model, rows, 8).values, f.values);
  EXPECT_THROW(featurize(model, rows, 5), InvalidArgument);
}

TEST(Featurize, HeadOutputComposesWithReadout) {
  StringEmbedder emb(12);
  const EncoderModel model(micro_config(), 4);
  const Table t = toy_table(6, 4);
  const TablePreprocessor p(infer_schema(t, "y"), t, iota_rows(6), emb);
  const auto rows = p.rows(t);
  const FeatureMatrix full = featurize(model, rows, 8);
  const FeatureMatrix small = featurize(model, rows, 4);
  const ProjectionHead& h = *model.head(4);
  for (Eigen::Index i = 0; i < 6; ++i) {
    // Two linear maps written out directly.
    const RowVectorXd hidden = full.values.row(i) * h.w1.value + h.b1.value;
    const RowVectorXd expect = hidden * h.w2.value + h.b2.value;
    EXPECT_LT((small.values.row(i) - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Featurize, RowShufflePermutesOutput) {
  StringEmbedder emb(12);
  const EncoderModel model(micro_config(), 5);
  const Table t = toy_table(12, 5);
  const TablePreprocessor p(infer_schema(t, "y"), t, iota_rows(12), emb);
  std::vector<std::size_t> perm = iota_rows(12);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  const FeatureMatrix a = featurize(model, p.rows(t), 8);
  const FeatureMatrix b = featurize(model, p.rows(t, perm), 8);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(b.values.row(static_cast<Eigen::Index>(i)), a.values.row(static_cast<Eigen::Index>(perm[i])));
  }
}

TEST(FeatureCache, RoundTripAndCorruption) {
  const fs::path dir = fs::temp_directory_path() / "tartekit_feature_cache";
  fs::create_directories(dir);
  std::mt19937_64 rng(6);
  FeatureMatrix f;
  f.values = gaussian(7, 3, rng);
  f.missing = {0, 1, 0, 0, 0, 1, 0};
  write_feature_cache(dir / "f.bin", f, "abc123");
  std::string id;
  const FeatureMatrix g = read_feature_cache(dir / "f.bin", &id);
  EXPECT_EQ(g.values, f.values);
  EXPECT_EQ(g.missing, f.missing);
  EXPECT_EQ(id, "abc123");
  const auto size = fs::file_size(dir / "f.bin");
  fs::resize_file(dir / "f.bin", size - 3);
  EXPECT_THROW(read_feature_cache(dir / "f.bin"), ParseError);
  EXPECT_THROW(read_feature_cache(dir / "absent.bin"), IoError);
  fs::remove_all(dir);
}

TEST(Predictions, RoundTrip) {
  const fs::path path = fs::temp_directory_path() / "tartekit_preds.csv";
  Predictions p{{"a", "b,c", "7"}, {0.1, 1.0 / 3.0, -2e10}};
  write_predictions(path, p);
  const Predictions q = read_predictions(path);
  EXPECT_EQ(q.row_ids, p.row_ids);
  EXPECT_EQ(q.values, p.values);
  fs::remove(path);
}

struct FineTuneFixture {
  StringEmbedder emb{12};
  EncoderModel model{micro_config(), 7};
  Table table = toy_table(24, 7);
  TableSchema schema = infer_schema(table, "y");
  std::vector<CellPairSequence> rows;
  std::vector<double> y;
  FineTuneFixture() {
    rows = TablePreprocessor(schema, table, iota_rows(24), emb).rows(table);
    y = target_values(table, schema);
  }
  FineTuneConfig quick() const {
    FineTuneConfig c;
    c.learning_rates = {1e-3, 5e-3};
    c.bags = 2;
    c.max_epochs = 4;
    c.patience = 2;
    c.batch_size = 8;
    return c;
  }
};

TEST(FineTune, FreezeContractAndBagMean) {
  FineTuneFixture fx;
  const std::string before = transformer_digest(fx.model);
  const FineTunedModel ft = fine_tune(fx.model, fx.rows, fx.y, TaskKind::Regression, fx.quick());
  EXPECT_EQ(transformer_digest(*ft.backbone), before);
  EXPECT_EQ(transformer_digest(fx.model), before);
  ASSERT_EQ(ft.members.size(), 2u);
  ASSERT_EQ(ft.grid_losses.size(), 2u);
  EXPECT_EQ(ft.learning_rate, ft.grid_losses[0] <= ft.grid_losses[1] ? 1e-3 : 5e-3);
  const VectorXd p = ft.predict(fx.rows);
  const VectorXd mean = (ft.member_predict(0, fx.rows) + ft.member_predict(1, fx.rows)) / 2.0;
  EXPECT_LT((p - mean).cwiseAbs().maxCoeff(), 1e-12);
  // Members were trained: their maps moved away from the backbone's.
  EXPECT_NE(ft.members[0].rho_cell.weight.value, fx.model.rho_cell.weight.value);
}

TEST(FineTune, ZeroEpochsKeepsInitialHead) {
  FineTuneFixture fx;
  FineTuneConfig c = fx.quick();
  c.bags = 1;
  c.max_epochs = 0;
  c.patience = 0;
  c.learning_rates = {1e-3};
  const FineTunedModel ft = fine_tune(fx.model, fx.rows, fx.y, TaskKind::Regression, c);
  const FineTuneMember& m = ft.members[0];
  EXPECT_EQ(m.epochs, 0);
  EXPECT_EQ(m.rho_cell.weight.value, fx.model.rho_cell.weight.value);
  // Oracle: readout through the untouched backbone, then the three blocks by hand.
  const FeatureMatrix f = featurize(fx.model, fx.rows, 8);
  for (std::size_t i = 0; i < fx.rows.size(); ++i) {
    Tape<double> tape(false);
    Var<double> h = tape.constant(f.values.row(static_cast<Eigen::Index>(i)));
    for (const auto& b : m.head) h = rho_forward(tape, b, h);
    EXPECT_NEAR(ft.member_raw(0, fx.rows[i]), h.value()(0, 0), 1e-12);
  }
}

TEST(FineTune, ClassificationOutputsAreProbabilities) {
  FineTuneFixture fx;
  std::vector<double> labels;
  for (const auto& r : fx.table.rows) labels.push_back(r[0] == "Tokyo" || r[0] == "Osaka" || r[0] == "Kyoto" || r[0] == "Nagoya" ? 1.0 : 0.0);
  const FineTunedModel ft = fine_tune(fx.model, fx.rows, labels, TaskKind::Classification, fx.quick());
  const VectorXd p = ft.predict(fx.rows);
  EXPECT_GE(p.minCoeff(), 0.0);
  EXPECT_LE(p.maxCoeff(), 1.0);
  for (const auto& m : ft.members) {
    EXPECT_TRUE(std::any_of(m.train_rows.begin(), m.train_rows.end(), [&](std::size_t i) { return labels[i] == 1.0; }));
  }
}

TEST(FineTune, PreconditionsAndCheckpoint) {
  FineTuneFixture fx;
  std::vector<CellPairSequence> few(fx.rows.begin(), fx.rows.begin() + 7);
  std::vector<double> few_y(fx.y.begin(), fx.y.begin() + 7);
  try {
    fine_tune(fx.model, few, few_y, TaskKind::Regression, fx.quick());
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("ridge"), std::string::npos);
  }
  FineTuneConfig bad = fx.quick();
  bad.bags = 0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  EXPECT_EQ(FineTuneConfig{}.batch_size_for(500), 16);
  EXPECT_EQ(FineTuneConfig{}.batch_size_for(20000), 256);

  const FineTunedModel ft = fine_tune(fx.model, fx.rows, fx.y, TaskKind::Regression, fx.quick());
  const Checkpoint ckpt = deserialize_checkpoint(serialize_checkpoint(to_checkpoint(ft, fx.emb)));
  ASSERT_TRUE(is_fine_tuned_checkpoint(ckpt));
  const FineTunedModel back = fine_tuned_from_checkpoint(ckpt);
  EXPECT_EQ(back.predict(fx.rows), ft.predict(fx.rows));
  EXPECT_EQ(back.members[1].validation_rows, ft.members[1].validation_rows);
  EXPECT_EQ(back.featurize(fx.rows).values, ft.featurize(fx.rows).values);
}

TEST(Boost, PerfectBaseIsUnchanged) {
  std::mt19937_64 rng(8);
  const MatrixXd ftr = gaussian(30, 6, rng), fte = gaussian(10, 6, rng);
  const VectorXd y = gaussian_vector(30, rng), test_base = gaussian_vector(10, rng);
  const BoostResult r = boost(y, test_base, ftr, fte, y, TaskKind::Regression);
  EXPECT_LT(r.model.stages[0].ridge.weights.cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((r.test_predictions - test_base).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((r.train_predictions - y).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Boost, ConstantBaseEqualsPlainRidge) {
  std::mt19937_64 rng(9);
  const MatrixXd ftr = gaussian(40, 5, rng), fte = gaussian(15, 5, rng);
  const VectorXd y = gaussian_vector(40, rng);
  const double c = y.mean();
  const BoostResult r = boost(VectorXd::Constant(40, c), VectorXd::Constant(15, c), ftr, fte, y, TaskKind::Regression);
  const RidgeModel plain = fit_ridge_loocv(ftr, y);
  EXPECT_LT((r.test_predictions - plain.predict(fte)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((r.model.stages[0].ridge.weights - plain.weights).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Boost, FitsResidualStructure) {
  std::mt19937_64 rng(10);
  const int n = 60;
  MatrixXd f = gaussian(n, 4, rng);
  const VectorXd base = gaussian_vector(n, rng);
  const VectorXd y = base + 0.8 * f.col(2);  // residual is linear in the features
  const BoostResult r = boost(base, base.head(5), f, f.topRows(5), y, TaskKind::Regression);
  const double base_rmse = std::sqrt((y - base).squaredNorm() / n);
  const double boosted_rmse = std::sqrt((y - r.train_predictions).squaredNorm() / n);
  EXPECT_LT(boosted_rmse, base_rmse);
}

TEST(Boost, ClassificationAndErrors) {
  std::mt19937_64 rng(12);
  const MatrixXd f = gaussian(30, 3, rng);
  VectorXd y(30), p(30);
  for (int i = 0; i < 30; ++i) {
    y[i] = f(i, 0) > 0 ? 1.0 : 0.0;
    p[i] = i % 3 == 0 ? 0.0 : 0.6;
  }
  for (ResidualSpace s : {ResidualSpace::Probability, ResidualSpace::Logit}) {
    const BoostResult r = boost(p, p, f, f, y, TaskKind::Classification, s);
    EXPECT_GE(r.test_predictions.minCoeff(), 0.0);
    EXPECT_LE(r.test_predictions.maxCoeff(), 1.0);
    EXPECT_LT((y - r.train_predictions).squaredNorm(), (y - p).squaredNorm()) << to_string(s);
  }
  EXPECT_THROW(boost(p.head(29), p, f, f, y, TaskKind::Regression), DimensionError);
  EXPECT_THROW(boost(p, p.head(29), f, f, y, TaskKind::Regression), DimensionError);
  EXPECT_THROW(boost(p * 2.0, p, f, f, y, TaskKind::Classification), InvalidArgument);
  EXPECT_EQ(residual_space_from_string("logit"), ResidualSpace::Logit);
}

TEST(Boost, ChainNeverIncreasesTrainResidual) {
  std::mt19937_64 rng(13);
  const MatrixXd f1 = gaussian(40, 4, rng), f2 = gaussian(40, 6, rng);
  const VectorXd y = gaussian_vector(40, rng);
  const BoostResult r = boost_chain(VectorXd::Zero(40), VectorXd::Zero(40), {f1, f2}, {f1, f2}, y,
                                    TaskKind::Regression);
  ASSERT_EQ(r.train_residual_mse.size(), 2u);
  EXPECT_LE(r.train_residual_mse[1], r.train_residual_mse[0]);
  EXPECT_LE(r.train_residual_mse[0], y.squaredNorm() / 40.0);
  EXPECT_EQ(r.model.predict(VectorXd::Zero(40), {f1, f2}), r.test_predictions);
}

TEST(Specialize, DegenerateChains) {
  FineTuneFixture fx;
  std::vector<CellPairSequence> train(fx.rows.begin(), fx.rows.begin() + 16), test(fx.rows.begin() + 16, fx.rows.end());
  const VectorXd y = to_vector(std::vector<double>(fx.y.begin(), fx.y.begin() + 16));
  const VectorXd base_tr = VectorXd::Zero(16), base_te = VectorXd::Zero(8);
  const BoostResult plain = boost(base_tr, base_te, featurize(fx.model, train, 8).with_missing_flag(),
                                  featurize(fx.model, test, 8).with_missing_flag(), y, TaskKind::Regression);
  const BoostResult none = specialize_and_boost(fx.model, train, test, base_tr, base_te, y, TaskKind::Regression, {});
  EXPECT_EQ(none.test_predictions, plain.test_predictions);

  // A source whose maps were never trained shares the pretrained featurizer.
  FineTuneConfig c = fx.quick();
  c.max_epochs = 0;
  const FineTunedModel same = fine_tune(fx.model, fx.rows, fx.y, TaskKind::Regression, c);
  const BoostResult one =
      specialize_and_boost(fx.model, train, test, base_tr, base_te, y, TaskKind::Regression, {&same});
  EXPECT_LT((one.test_predictions - plain.test_predictions).cwiseAbs().maxCoeff(), 1e-10);

  const FineTunedModel tuned = fine_tune(fx.model, fx.rows, fx.y, TaskKind::Regression, fx.quick());
  const BoostResult two =
      specialize_and_boost(fx.model, train, test, base_tr, base_te, y, TaskKind::Regression, {&tuned, &same});
  EXPECT_LE(two.train_residual_mse[1], two.train_residual_mse[0]);

  EncoderConfig wide = micro_config();
  wide.d_lm = 16;
  FineTunedModel other = same;
  other.backbone = std::make_shared<EncoderModel>(wide, 1);
  EXPECT_THROW(
      specialize_and_boost(fx.model, train, test, base_tr, base_te, y, TaskKind::Regression, {&other}),
      DimensionError);
}

TEST(Vectorizer, OneHotAndHighCardinality) {
  Table t;
  t.header = {"n", "s", "big"};
  for (int i = 0; i < 100; ++i) {
    t.rows.push_back({std::to_string(i % 9), i % 2 ? "odd" : "even", "v" + std::to_string(i % 50)});
  }
  t.rows[0][0] = "NA";
  const TableSchema schema = infer_schema(t);
  const TableVectorizer v(schema, t, iota_rows(100));
  EXPECT_EQ(v.width(), 1u + 2u + 40u + 1u);
  const MatrixXd X = v.transform(t);
  EXPECT_EQ(X(0, 0), 0.0);
  for (Eigen::Index i = 0; i < 100; ++i) {
    EXPECT_EQ(X.row(i).segment(1, 2).sum(), 1.0);
    EXPECT_EQ(X.row(i).segment(3, 41).sum(), 1.0);
  }
  // Counts tie at two apiece, so the 40 kept values are the first 40 in text
  // order; the remaining ten land in "other".
  EXPECT_EQ(v.feature_names().back(), "big=<other>");
  const std::size_t other = 43;
  long in_other = 0;
  for (Eigen::Index i = 0; i < 100; ++i) in_other += X(i, static_cast<Eigen::Index>(other)) == 1.0;
  EXPECT_EQ(in_other, 20);
  Table unseen = t;
  unseen.rows = {{"3", "neither", "zzz"}};
  const MatrixXd U = v.transform(unseen);
  EXPECT_EQ(U.row(0).segment(1, 2).sum(), 0.0);
  EXPECT_EQ(U(0, static_cast<Eigen::Index>(other)), 1.0);
}

}  // namespace
}  // namespace tartekit
