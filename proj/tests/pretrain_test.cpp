#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "gradcheck.hpp"
#include "tartekit/kb/synthetic.hpp"
#include "tartekit/pretrain/trainer.hpp"

namespace tartekit {
namespace {

using testing::random_matrix;

// Plain-loop InfoNCE written straight from the definition.
double oracle_info_nce(const MatrixXd& k, const PositiveMap& pos, double tau) {
  double total = 0;
  int terms = 0;
  auto term = [&](int i, int t) {
    double z = 0;
    for (int j = 0; j < k.rows(); ++j) {
      if (j != i) z += std::exp(k(i, j) / tau);
    }
    return -std::log(std::exp(k(i, t) / tau) / z);
  };
  for (const auto& [a, p] : pos) {
    total += term(a, p) + term(p, a);
    terms += 2;
  }
  return total / terms;
}

// Median over the full list of off-diagonal distances, by sorting.
double oracle_median(const MatrixXd& z) {
  std::vector<double> d;
  for (int i = 0; i < z.rows(); ++i) {
    for (int j = 0; j < z.rows(); ++j) {
      if (i != j) d.push_back((z.row(i) - z.row(j)).norm());
    }
  }
  std::sort(d.begin(), d.end());
  const std::size_t n = d.size();
  return n % 2 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
}

PositiveMap interleaved(int pairs) {
  PositiveMap m;
  for (int i = 0; i < pairs; ++i) m.emplace_back(2 * i, 2 * i + 1);
  return m;
}

TEST(GaussianKernel, IdenticalRowsGiveOnes) {
  double h = 0;
  const MatrixXd k = gaussian_kernel_matrix(MatrixXd::Constant(2, 3, 0.7), &h);
  EXPECT_EQ(h, kBandwidthFloor);
  EXPECT_EQ(k, MatrixXd::Ones(2, 2));
}

TEST(GaussianKernel, UnitBasisRows) {
  double h = 0;
  const MatrixXd k = gaussian_kernel_matrix(MatrixXd::Identity(2, 2), &h);
  EXPECT_NEAR(h, std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(k(0, 1), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(k(0, 1), 0.6065306597, 1e-10);
}

TEST(GaussianKernel, SymmetricUnitDiagonalAndMedianBandwidth) {
  std::mt19937_64 rng(1);
  for (int rows : {3, 8, 9}) {
    const MatrixXd z = random_matrix(rows, 4, rng);
    double h = 0;
    const MatrixXd k = gaussian_kernel_matrix(z, &h);
    EXPECT_NEAR(h, oracle_median(z), 1e-14);
    for (int i = 0; i < rows; ++i) {
      EXPECT_EQ(k(i, i), 1.0);
      for (int j = 0; j < rows; ++j) {
        EXPECT_EQ(k(i, j), k(j, i));
        EXPECT_GT(k(i, j), 0.0);
        EXPECT_LE(k(i, j), 1.0);
        EXPECT_NEAR(k(i, j), std::exp(-(z.row(i) - z.row(j)).squaredNorm() / (2 * h * h)), 1e-14);
      }
    }
  }
}

TEST(GaussianKernel, GradientTreatsBandwidthAsConstant) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    Parameter<double> z("z", random_matrix(6, 3, rng));
    const MatrixXd w = random_matrix(6, 6, rng);
    const double h0 = median_bandwidth(z.value);
    {
      Tape<double> tape;
      tape.backward(sum(mul(gaussian_kernel(tape.param(z)).kernel, tape.constant(w))));
    }
    // Finite differences of sum_ij w_ij exp(-d_ij^2 / 2 h0^2) with h0 frozen.
    auto f = [&](const MatrixXd& zz) {
      double s = 0;
      for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) s += w(i, j) * std::exp(-(zz.row(i) - zz.row(j)).squaredNorm() / (2 * h0 * h0));
      }
      return s;
    };
    MatrixXd numeric(6, 3);
    for (int i = 0; i < z.value.size(); ++i) {
      MatrixXd up = z.value, down = z.value;
      up.data()[i] += 1e-6;
      down.data()[i] -= 1e-6;
      numeric.data()[i] = (f(up) - f(down)) / 2e-6;
    }
    EXPECT_LT((z.grad - numeric).norm() / numeric.norm(), 1e-6);
  }
}

TEST(InfoNce, UniformKernelGivesLogOfCandidates) {
  for (int m : {2, 4, 10, 64}) {
    const MatrixXd k = MatrixXd::Ones(m, m);
    EXPECT_NEAR(info_nce(k, interleaved(m / 2), 1.0), std::log(m - 1.0), 1e-10);
    EXPECT_NEAR(info_nce(k, interleaved(m / 2), 0.3), std::log(m - 1.0), 1e-10);
  }
}

TEST(InfoNce, SharpPositivesDriveLossTowardZero) {
  const int m = 8;
  MatrixXd k = MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) k(i, i) = 1.0;
  for (int i = 0; i < m; i += 2) k(i, i + 1) = k(i + 1, i) = 1.0;
  const double loss = info_nce(k, interleaved(4), 0.1);
  EXPECT_LT(loss, 1e-3);
  EXPECT_LT(loss, std::log(m - 1.0));
  EXPECT_NEAR(loss, oracle_info_nce(k, interleaved(4), 0.1), 1e-12);
}

TEST(InfoNce, MatchesOracleAndRespondsToTemperature) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    MatrixXd k(10, 10);
    for (int i = 0; i < 10; ++i) {
      k(i, i) = 1.0;
      for (int j = 0; j < i; ++j) k(i, j) = k(j, i) = u(rng);
    }
    for (double tau : {0.1, 0.5, 1.0, 2.0}) {
      const double loss = info_nce(k, interleaved(5), tau);
      EXPECT_NEAR(loss, oracle_info_nce(k, interleaved(5), tau), 1e-12);
      EXPECT_GE(loss, std::log(9.0) - 1.0 / tau);
    }
    EXPECT_NE(info_nce(k, interleaved(5), 1.0), info_nce(k, interleaved(5), 2.0));
  }
}

TEST(InfoNce, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    Parameter<double> k("k", random_matrix(6, 6, rng, 0.5));
    const PositiveMap pos{{0, 3}, {1, 4}, {2, 5}};
    auto f = [&](Tape<double>& t) { return info_nce(t.param(k), pos, 0.7); };
    EXPECT_LT(testing::gradient_relative_error({&k}, f), 1e-6);
  }
}

TEST(InfoNce, RejectsBadMaps) {
  const MatrixXd k = MatrixXd::Ones(4, 4);
  EXPECT_THROW(info_nce(k, {{1, 1}}, 1.0), InvalidArgument);
  EXPECT_THROW(info_nce(k, {{0, 7}}, 1.0), InvalidArgument);
  EXPECT_THROW(info_nce(k, {}, 1.0), InvalidArgument);
  EXPECT_THROW(info_nce(k, {{0, 1}}, 0.0), InvalidArgument);
}

TEST(MatryoshkaLoss, MeanOfPerDimLosses) {
  std::mt19937_64 rng(5);
  const MatrixXd a = random_matrix(8, 4, rng), b = random_matrix(8, 16, rng);
  const auto pos = interleaved(4);
  Tape<double> tape(false);
  const double single = matryoshka_loss({tape.constant(a)}, pos).value()(0, 0);
  EXPECT_NEAR(single, oracle_info_nce(gaussian_kernel_matrix(a), pos, 1.0), 1e-12);
  const double both = matryoshka_loss({tape.constant(a), tape.constant(b)}, pos).value()(0, 0);
  const double expected =
      0.5 * (oracle_info_nce(gaussian_kernel_matrix(a), pos, 1.0) + oracle_info_nce(gaussian_kernel_matrix(b), pos, 1.0));
  EXPECT_NEAR(both, expected, 1e-12);
  const MatrixXd same = MatrixXd::Ones(8, 4);
  EXPECT_NEAR(matryoshka_loss({tape.constant(same), tape.constant(same)}, pos).value()(0, 0), std::log(7.0), 1e-10);
  EXPECT_THROW(matryoshka_loss({}, pos), InvalidArgument);
}

TEST(MatryoshkaLoss, TranslationInvariant) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd z = random_matrix(12, 5, rng);
    const RowVectorXd shift = random_matrix(1, 5, rng, 10.0);
    const MatrixXd moved = z.rowwise() + shift;
    Tape<double> tape(false);
    const double a = matryoshka_loss({tape.constant(z)}, interleaved(6)).value()(0, 0);
    const double b = matryoshka_loss({tape.constant(moved)}, interleaved(6)).value()(0, 0);
    EXPECT_LT(std::abs(a - b), 1e-10);
  }
}

EncoderConfig toy_encoder() {
  EncoderConfig c;
  c.d_lm = 24;
  c.d_model = 16;
  c.layers = 1;
  c.heads = 2;
  c.d_ff = 32;
  c.projection_hidden = 16;
  c.matryoshka_dims = {8, 16};
  return c;
}

PretrainConfig toy_pretrain(std::int64_t steps) {
  PretrainConfig p;
  p.entities_per_batch = 6;
  p.facts_per_row = 4;
  p.total_steps = steps;
  p.warmup_steps = 2;
  p.lr_min = 1e-5;
  p.lr_max = 1e-3;
  p.matryoshka_dims = {8, 16};
  p.checkpoint_interval = 3;
  p.seed = 17;
  return p;
}

TEST(Pretrain, ZeroStepsReturnsInitialCheckpoint) {
  const KnowledgeStore store(make_synthetic_kb({30, 2, 1}).triples);
  StringEmbedder emb(24);
  EncoderModel model(toy_encoder(), 1);
  const EncoderModel before = model;
  std::ostringstream log;
  const auto r = pretrain(store, model, emb, toy_pretrain(0), {std::nullopt, &log});
  EXPECT_TRUE(r.trace.empty());
  EXPECT_EQ(log.str(), "step,lr,loss\n");
  const EncoderModel restored = model_from_checkpoint(r.checkpoint);
  for (std::size_t i = 0; i < before.parameters().size(); ++i) {
    EXPECT_EQ(restored.parameters()[i]->value, before.parameters()[i]->value);
  }
}

TEST(Pretrain, SeededRunsAreBitIdenticalAndCheckpointsCarryOptimizerState) {
  const KnowledgeStore store(make_synthetic_kb({40, 2, 2}).triples);
  StringEmbedder emb(24);
  const auto dir = std::filesystem::temp_directory_path() / "tartekit_pretrain_test";
  std::filesystem::remove_all(dir);
  EncoderModel a(toy_encoder(), 5), b(toy_encoder(), 5);
  std::ostringstream log_a, log_b;
  const auto ra = pretrain(store, a, emb, toy_pretrain(7), {dir, &log_a});
  const auto rb = pretrain(store, b, emb, toy_pretrain(7), {std::nullopt, &log_b});
  EXPECT_EQ(ra.trace, rb.trace);
  EXPECT_EQ(log_a.str(), log_b.str());
  ASSERT_EQ(ra.trace.size(), 7u);
  for (const auto& rec : ra.trace) EXPECT_TRUE(std::isfinite(rec.loss));
  EXPECT_EQ(ra.trace[2].lr, lr_at(toy_pretrain(7).schedule(), 2));
  // Interval 3 over 7 steps: after steps 3 and 6, then the final one.
  ASSERT_EQ(ra.written.size(), 3u);
  EXPECT_EQ(ra.written.back().filename(), "step_7.ckpt");
  const Checkpoint last = read_checkpoint(ra.written.back());
  auto params = a.parameters();
  const auto state = optimizer_from_checkpoint(last, params);
  EXPECT_EQ(state.step, 7);
  EXPECT_GT(state.second_moment.front().norm(), 0.0);
  const EncoderModel restored = model_from_checkpoint(last);
  for (std::size_t i = 0; i < params.size(); ++i) EXPECT_EQ(restored.parameters()[i]->value, params[i]->value);
  std::filesystem::remove_all(dir);
}

TEST(Pretrain, NonFiniteLossAbortsWithDiagnostics) {
  const KnowledgeStore store(make_synthetic_kb({30, 2, 3}).triples);
  StringEmbedder emb(24);
  EncoderModel model(toy_encoder(), 1);
  model.final_norm_gain.value(0, 0) = std::nan("");
  try {
    pretrain(store, model, emb, toy_pretrain(3));
    FAIL();
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("step 0"), std::string::npos);
    EXPECT_NE(msg.find("final_norm.gain"), std::string::npos);
  }
}

TEST(Pretrain, RejectsUnknownHeadAndSmallPool) {
  const KnowledgeStore store(make_synthetic_kb({30, 2, 3}).triples);
  StringEmbedder emb(24);
  EncoderModel model(toy_encoder(), 1);
  auto cfg = toy_pretrain(2);
  cfg.matryoshka_dims = {12};
  EXPECT_THROW(pretrain(store, model, emb, cfg), InvalidArgument);
  cfg = toy_pretrain(2);
  cfg.entities_per_batch = 31;
  EXPECT_THROW(pretrain(store, model, emb, cfg), InvalidArgument);
}

TEST(PairSimilarity, SeparatesPlantedPairs) {
  MatrixXd z(4, 2);
  z << 0, 0, 0.1, 0, 5, 5, 5, 5.1;
  const auto s = pair_similarity(z, interleaved(2));
  EXPECT_GT(s.positive, s.negative);
}

}  // namespace
}  // namespace tartekit
