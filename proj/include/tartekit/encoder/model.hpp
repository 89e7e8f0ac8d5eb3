#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "tartekit/embed/datetime.hpp"
#include "tartekit/embed/power_transform.hpp"
#include "tartekit/embed/string_embedder.hpp"
#include "tartekit/numerics/tensor.hpp"

namespace tartekit {

enum class ColumnKind { Numerical, CategoricalString, Datetime };

std::string to_string(ColumnKind kind);
ColumnKind column_kind_from_string(const std::string& s);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::CategoricalString;
  RowVectorXd embedding;  // language-model vector of the column name
  std::optional<PowerTransform> transform;
};

// Builds a ColumnSpec whose embedding is the embedded column name.
ColumnSpec make_column_spec(const std::string& name, ColumnKind kind, const StringEmbedder& embedder,
                            std::optional<PowerTransform> transform = std::nullopt);

// A raw cell. Text is parsed according to the column kind; monostate is a
// missing cell.
using Cell = std::variant<std::monostate, std::string, double, DatetimeValue>;

struct CellPair {
  RowVectorXd column;  // E_j
  RowVectorXd cell;    // X_j
};

struct CellPairSequence {
  std::vector<CellPair> pairs;
  long row_index = 0;
};

// Scalar fed to the X = s * E rule for numerical and datetime cells: the
// (power-transformed) number or fractional year.
double numeric_cell_scalar(const ColumnSpec& col, const Cell& cell);

// (E_j, X_j) for one cell, or nullopt when the cell is missing. Throws
// ParseError when the text does not match the column kind.
std::optional<CellPair> build_cell_pair(const ColumnSpec& col, const Cell& cell, const StringEmbedder& embedder);

struct EncoderConfig {
  int d_lm = 300;
  int d_model = 768;
  int layers = 3;
  int heads = 24;
  int d_ff = 2048;
  int projection_hidden = 2048;
  std::vector<int> matryoshka_dims{64, 128, 256, 512, 768};
  double dropout = 0.1;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

using Param = Parameter<double>;

// LayerNorm -> ReLU -> Linear.
struct RhoBlock {
  Param norm_gain;
  Param norm_bias;
  Param weight;
  Param bias;
};

// Norm gain 1, bias 0; linear weights and bias U(+-1/sqrt(in)).
RhoBlock make_rho_block(const std::string& prefix, int in, int out, std::mt19937_64& rng);

struct EncoderLayer {
  Param attn_norm_gain, attn_norm_bias;
  Param wq, bq, wk, bk, wv, bv, wo, bo;
  Param ff_norm_gain, ff_norm_bias;
  Param w1, b1, w2, b2;
};

// Two stacked linear maps d -> projection_hidden -> dim.
struct ProjectionHead {
  int dim = 0;
  Param w1, b1, w2, b2;
};

struct RowEmbedding {
  RowVectorXd vector;
  bool missing = false;
};

class EncoderModel {
 public:
  EncoderModel() = default;
  EncoderModel(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  void set_dropout(double p) {
    if (p < 0.0 || p >= 1.0) throw InvalidArgument("dropout must be in [0, 1)");
    config_.dropout = p;
  }

  // Projection head of a given output width, or nullptr.
  const ProjectionHead* head(int dim) const;

  // Every parameter in a fixed order; names are unique and stable.
  std::vector<Param*> parameters();
  std::vector<const Param*> parameters() const;

  Param* find(const std::string& name);

  // Freezes T, all attention/feed-forward layers and the final norm;
  // the column/cell maps stay trainable unless train_rho is false.
  void freeze_transformer(bool train_rho = true);
  void unfreeze_all();

  // The frozen-transformer subset (readout, layers, final norm).
  std::vector<const Param*> transformer_parameters() const;

  RhoBlock rho_column;
  RhoBlock rho_cell;
  Param readout;
  std::vector<EncoderLayer> blocks;
  Param final_norm_gain;
  Param final_norm_bias;
  std::vector<ProjectionHead> projection_heads;

 private:
  EncoderConfig config_;
};

std::int64_t parameter_count(const EncoderModel& model);

// Config-only version; equals parameter_count(EncoderModel(config, seed)).
std::int64_t parameter_count(const EncoderConfig& config);

// rho(x) = Linear(ReLU(LayerNorm(x))).
Var<double> rho_forward(Tape<double>& tape, const RhoBlock& rho, Var<double> x);

// stack[T; rho_E(E_j) + rho_X(X_j)] for the k pairs of a row: (k+1) x d.
// Throws EmptyRow when the row has no observed cells.
Var<double> assemble_input(Tape<double>& tape, const EncoderModel& model, const CellPairSequence& row);
// Same, with column/cell maps other than the model's own (fine-tuned copies).
Var<double> assemble_input(Tape<double>& tape, const EncoderModel& model, const CellPairSequence& row,
                           const RhoBlock& rho_column, const RhoBlock& rho_cell);

// L pre-norm attention + feed-forward blocks over Z; returns the final
// readout row (1 x d). Dropout is applied only when rng is non-null.
Var<double> encode_row(Tape<double>& tape, const EncoderModel& model, Var<double> z, std::mt19937_64* rng = nullptr);

Var<double> project(Tape<double>& tape, const ProjectionHead& head, Var<double> h);

// Eval-mode conveniences. A row without cells yields a zero vector with the
// missing flag set.
RowEmbedding encode(const EncoderModel& model, const CellPairSequence& row);
std::map<int, RowVectorXd> project_matryoshka(const EncoderModel& model, const RowEmbedding& h);

class EmptyRow : public InvalidArgument {
 public:
  EmptyRow()
      : InvalidArgument("row has no observed cells; emit a zero embedding with the missing flag instead") {}
};

}  // namespace tartekit
