#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "gradcheck.hpp"
#include "tartekit/encoder/checkpoint.hpp"
#include "tartekit/encoder/model.hpp"

namespace tartekit {
namespace {

using testing::random_matrix;

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

CellPairSequence random_row(int k, int d_lm, std::mt19937_64& rng) {
  CellPairSequence row;
  for (int j = 0; j < k; ++j) {
    row.pairs.push_back({random_matrix(1, d_lm, rng), random_matrix(1, d_lm, rng)});
  }
  return row;
}

TEST(BuildCellPair, NumericalScalesColumnEmbedding) {
  StringEmbedder emb(16);
  // Identity transform centred at 5 with unit scale: t(5) = 0, t(7) = 2.
  auto col = make_column_spec("height", ColumnKind::Numerical, emb, PowerTransform{"height", 1.0, 5.0, 1.0});
  auto zero = build_cell_pair(col, Cell{5.0}, emb);
  ASSERT_TRUE(zero.has_value());
  EXPECT_EQ(zero->cell.norm(), 0.0);
  auto two = build_cell_pair(col, Cell{std::string("7")}, emb);
  ASSERT_TRUE(two.has_value());
  for (Eigen::Index i = 0; i < 16; ++i) EXPECT_NEAR(two->cell(i), 2.0 * col.embedding(i), 1e-12);
  EXPECT_EQ(two->column, col.embedding);
}

TEST(BuildCellPair, CategoricalUsesStringEmbedding) {
  StringEmbedder emb(16);
  auto col = make_column_spec("Language", ColumnKind::CategoricalString, emb);
  auto pair = build_cell_pair(col, Cell{std::string("English")}, emb);
  ASSERT_TRUE(pair.has_value());
  EXPECT_EQ(pair->cell, emb.embed("English").vector);
  EXPECT_EQ(pair->column, emb.embed("Language").vector);
}

TEST(BuildCellPair, DatetimeUsesFractionalYear) {
  StringEmbedder emb(8);
  auto col = make_column_spec("founded", ColumnKind::Datetime, emb, PowerTransform{"founded", 1.0, 2000.0, 10.0});
  auto pair = build_cell_pair(col, Cell{std::string("2010-01-01")}, emb);
  ASSERT_TRUE(pair.has_value());
  EXPECT_NEAR((pair->cell - 1.0 * col.embedding).norm(), 0.0, 1e-12);
}

TEST(BuildCellPair, MissingAndUnparseable) {
  StringEmbedder emb(8);
  auto num = make_column_spec("x", ColumnKind::Numerical, emb);
  EXPECT_FALSE(build_cell_pair(num, Cell{}, emb).has_value());
  EXPECT_THROW(build_cell_pair(num, Cell{std::string("abc")}, emb), ParseError);
  auto dt = make_column_spec("d", ColumnKind::Datetime, emb);
  EXPECT_THROW(build_cell_pair(dt, Cell{std::string("2001-02-30")}, emb), ParseError);
  auto cat = make_column_spec("c", ColumnKind::CategoricalString, emb);
  EXPECT_FALSE(build_cell_pair(cat, Cell{std::string("  ")}, emb).has_value());
}

TEST(AssembleInput, DefaultConfigShape) {
  EncoderModel model(EncoderConfig{}, 1);
  std::mt19937_64 rng(2);
  Tape<double> tape(false);
  auto z = assemble_input(tape, model, random_row(3, 300, rng));
  EXPECT_EQ(z.rows(), 4);
  EXPECT_EQ(z.cols(), 768);
}

TEST(AssembleInput, IdenticalPairsGiveIdenticalRows) {
  EncoderModel model(micro_config(), 3);
  std::mt19937_64 rng(4);
  auto row = random_row(3, 12, rng);
  row.pairs[2] = row.pairs[0];
  Tape<double> tape(false);
  auto z = assemble_input(tape, model, row);
  EXPECT_EQ(z.value().row(1), z.value().row(3));
  EXPECT_EQ(z.value().row(0), model.readout.value);
}

// rho computed by hand: LayerNorm (biased variance, eps 1e-5), ReLU, x W + b.
RowVectorXd hand_rho(const RhoBlock& r, const RowVectorXd& x) {
  const double mu = x.mean();
  double var = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) var += (x(i) - mu) * (x(i) - mu);
  var /= x.size();
  RowVectorXd h(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double n = (x(i) - mu) / std::sqrt(var + 1e-5) * r.norm_gain.value(0, i) + r.norm_bias.value(0, i);
    h(i) = std::max(0.0, n);
  }
  return h * r.weight.value + r.bias.value;
}

TEST(AssembleInput, MatchesHandAssembledOracle) {
  EncoderModel model(micro_config(), 5);
  std::mt19937_64 rng(6);
  model.readout.value.setZero();
  auto row = random_row(4, 12, rng);
  Tape<double> tape(false);
  auto z = assemble_input(tape, model, row);
  EXPECT_EQ(z.value().row(0).norm(), 0.0);
  for (int j = 0; j < 4; ++j) {
    const RowVectorXd expected = hand_rho(model.rho_column, row.pairs[j].column) + hand_rho(model.rho_cell, row.pairs[j].cell);
    EXPECT_LT((z.value().row(j + 1) - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(AssembleInput, ZeroCellMapLeavesOnlyColumns) {
  EncoderModel model(micro_config(), 7);
  model.rho_cell.weight.value.setZero();
  model.rho_cell.bias.value.setZero();
  std::mt19937_64 rng(8);
  auto a = random_row(3, 12, rng);
  auto b = a;
  for (auto& p : b.pairs) p.cell = random_matrix(1, 12, rng);
  Tape<double> tape(false);
  EXPECT_EQ(assemble_input(tape, model, a).value(), assemble_input(tape, model, b).value());
}

TEST(AssembleInput, EmptyRowIsAnError) {
  EncoderModel model(micro_config(), 7);
  Tape<double> tape(false);
  EXPECT_THROW(assemble_input(tape, model, CellPairSequence{}), EmptyRow);
  const auto h = encode(model, CellPairSequence{});
  EXPECT_TRUE(h.missing);
  EXPECT_EQ(h.vector.norm(), 0.0);
}

TEST(EncodeRow, PermutationInvariantReadout) {
  EncoderModel model(micro_config(), 9);
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    auto row = random_row(2 + trial % 6, 12, rng);
    auto shuffled = row;
    std::shuffle(shuffled.pairs.begin(), shuffled.pairs.end(), rng);
    const auto a = encode(model, row).vector;
    const auto b = encode(model, shuffled).vector;
    ASSERT_LT((a - b).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(EncodeRow, EvalModeIsDeterministicAndTrainModeIsNot) {
  EncoderModel model(micro_config(), 11);
  std::mt19937_64 rng(12);
  auto row = random_row(3, 12, rng);
  EXPECT_EQ(encode(model, row).vector, encode(model, row).vector);
  Tape<double> tape(false);
  std::mt19937_64 drop(1);
  auto noisy = encode_row(tape, model, assemble_input(tape, model, row), &drop).value();
  EXPECT_GT((noisy - encode(model, row).vector).norm(), 0.0);
}

TEST(EncodeRow, DuplicatedPairChangesOutput) {
  EncoderModel model(micro_config(), 13);
  std::mt19937_64 rng(14);
  auto one = random_row(1, 12, rng);
  auto two = one;
  two.pairs.push_back(one.pairs[0]);
  EXPECT_GT((encode(model, one).vector - encode(model, two).vector).norm(), 1e-8);
}

TEST(EncodeRow, FiniteOnThousandRandomRows) {
  EncoderModel model(micro_config(), 15);
  std::mt19937_64 rng(16);
  for (int i = 0; i < 1000; ++i) {
    auto row = random_row(1 + i % 7, 12, rng);
    for (auto& p : row.pairs) p.cell *= 50.0;
    ASSERT_TRUE(encode(model, row).vector.allFinite());
  }
}

TEST(EncodeRow, GradientMatchesFiniteDifferences) {
  auto cfg = micro_config();
  cfg.layers = 1;
  cfg.d_lm = 5;
  cfg.d_model = 4;
  cfg.d_ff = 6;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EncoderModel model(cfg, 50 + seed);
    std::mt19937_64 rng(seed);
    auto row = random_row(3, 5, rng);
    const MatrixXd w = random_matrix(1, 4, rng);
    const auto& head = model.projection_heads.front();
    auto f = [&](Tape<double>& t) {
      Var<double> h = encode_row(t, model, assemble_input(t, model, row));
      return add(sum(mul(h, t.constant(w))), sum(project(t, head, h)));
    };
    // Softmax ignores a per-query constant, so the key bias has zero true
    // gradient and finite differences would only measure rounding noise.
    std::vector<Param*> params;
    for (auto* p : model.parameters()) {
      if (p->name.find("key.bias") == std::string::npos) params.push_back(p);
    }
    EXPECT_LT(testing::gradient_relative_error(params, f), 1e-4) << "seed " << seed;
  }
}

TEST(EncodeRow, FrozenTransformerGetsExactlyZeroGradient) {
  EncoderModel model(micro_config(), 17);
  model.freeze_transformer();
  std::mt19937_64 rng(18);
  auto row = random_row(3, 12, rng);
  for (auto* p : model.parameters()) p->zero_grad();
  Tape<double> tape;
  tape.backward(sum(encode_row(tape, model, assemble_input(tape, model, row))));
  for (const auto* p : model.transformer_parameters()) EXPECT_EQ(p->grad.norm(), 0.0) << p->name;
  EXPECT_GT(model.rho_cell.weight.grad.norm(), 0.0);
  EXPECT_GT(model.rho_column.weight.grad.norm(), 0.0);
}

TEST(Matryoshka, DefaultDims) {
  EncoderModel model(EncoderConfig{}, 19);
  RowEmbedding h{RowVectorXd::Ones(768), false};
  const auto proj = project_matryoshka(model, h);
  ASSERT_EQ(proj.size(), 5u);
  for (int dim : {64, 128, 256, 512, 768}) EXPECT_EQ(proj.at(dim).size(), dim);
}

TEST(Matryoshka, ZeroHeadsAndLinearity) {
  EncoderModel model(micro_config(), 21);
  for (auto& head : model.projection_heads) {
    for (auto* p : {&head.w1, &head.b1, &head.w2, &head.b2}) p->value.setZero();
  }
  for (const auto& [dim, v] : project_matryoshka(model, {RowVectorXd::Zero(8), false})) EXPECT_EQ(v.norm(), 0.0);

  EncoderModel linear_model(micro_config(), 22);
  for (auto& head : linear_model.projection_heads) {
    head.b1.value.setZero();
    head.b2.value.setZero();
  }
  std::mt19937_64 rng(23);
  const RowVectorXd h = random_matrix(1, 8, rng);
  const auto base = project_matryoshka(linear_model, {h, false});
  const auto scaled = project_matryoshka(linear_model, {3.5 * h, false});
  for (const auto& [dim, v] : base) EXPECT_LT((scaled.at(dim) - 3.5 * v).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ParameterCount, HandCountedMicroConfig) {
  EncoderConfig c;
  c.d_lm = 3;
  c.d_model = 4;
  c.heads = 2;
  c.layers = 1;
  c.d_ff = 8;
  c.matryoshka_dims = {};
  // rho: norm 2*3 + weight 3*4 + bias 4 = 22, twice = 44
  // readout: 4
  // layer: norms 2*(2*4) = 16, q/k/v/out 4*(16+4) = 80, ff 4*8+8 + 8*4+4 = 76 -> 172
  // final norm: 8
  const std::int64_t hand = 44 + 4 + 172 + 8;
  EXPECT_EQ(parameter_count(EncoderModel(c, 0)), hand);
  EXPECT_EQ(parameter_count(c), hand);
}

TEST(ParameterCount, MonotoneInLayersAndDefaultAboveTwentyFiveMillion) {
  auto c = micro_config();
  const auto one = parameter_count(EncoderModel(c, 0));
  c.layers *= 2;
  EXPECT_GT(parameter_count(EncoderModel(c, 0)), one);
  EXPECT_GE(parameter_count(EncoderConfig{}), 25'000'000);
}

TEST(Checkpoint, RoundTripReproducesEmbeddingsBitExactly) {
  EncoderModel model(micro_config(), 31);
  StringEmbedder emb(12, NgramOptions{2, 4, 1000, 99});
  const auto path = std::filesystem::temp_directory_path() / "tartekit_encoder_ckpt.bin";
  write_checkpoint(path, make_encoder_checkpoint(model, emb));
  const Checkpoint loaded = read_checkpoint(path);
  EXPECT_EQ(loaded.config, model.config());
  const EncoderModel restored = model_from_checkpoint(loaded);
  const StringEmbedder emb2 = embedder_from_checkpoint(loaded);
  EXPECT_EQ(emb2.options().buckets, 1000u);
  EXPECT_EQ(emb2.embed("abc").vector, emb.embed("abc").vector);
  std::mt19937_64 rng(32);
  for (int i = 0; i < 10; ++i) {
    auto row = random_row(3, 12, rng);
    EXPECT_EQ(encode(model, row).vector, encode(restored, row).vector);
  }
  std::string bytes = serialize_checkpoint(loaded);
  EXPECT_EQ(bytes.substr(0, 8), "TARTEKIT");
  bytes[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bytes), ParseError);
  EXPECT_THROW(deserialize_checkpoint(serialize_checkpoint(loaded).substr(0, 40)), ParseError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace tartekit
