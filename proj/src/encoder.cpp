#include <cmath>
#include <sstream>

#include "tartekit/encoder/model.hpp"
#include "tartekit/error.hpp"

namespace tartekit {

std::string to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::Numerical:
      return "numerical";
    case ColumnKind::CategoricalString:
      return "categorical_string";
    case ColumnKind::Datetime:
      return "datetime";
  }
  return "unknown";
}

ColumnKind column_kind_from_string(const std::string& s) {
  if (s == "numerical") return ColumnKind::Numerical;
  if (s == "categorical_string") return ColumnKind::CategoricalString;
  if (s == "datetime") return ColumnKind::Datetime;
  throw ParseError("unknown column kind '" + s + "'");
}

ColumnSpec make_column_spec(const std::string& name, ColumnKind kind, const StringEmbedder& embedder,
                            std::optional<PowerTransform> transform) {
  ColumnSpec spec;
  spec.name = name;
  spec.kind = kind;
  spec.embedding = embedder.embed(name).vector;
  spec.transform = std::move(transform);
  return spec;
}

namespace {

double parse_number(const std::string& text, const std::string& column) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  while (end != nullptr && *end != '\0' && std::isspace(static_cast<unsigned char>(*end))) ++end;
  if (end == begin || *end != '\0' || !std::isfinite(v)) {
    throw ParseError("column '" + column + "': cannot read '" + text + "' as a number");
  }
  return v;
}

}  // namespace

double numeric_cell_scalar(const ColumnSpec& col, const Cell& cell) {
  double raw = 0.0;
  if (col.kind == ColumnKind::Numerical) {
    if (const auto* d = std::get_if<double>(&cell)) {
      raw = *d;
    } else if (const auto* s = std::get_if<std::string>(&cell)) {
      raw = parse_number(*s, col.name);
    } else {
      throw ParseError("column '" + col.name + "': expected a number");
    }
  } else if (col.kind == ColumnKind::Datetime) {
    if (const auto* d = std::get_if<DatetimeValue>(&cell)) {
      raw = datetime_to_fractional_year(*d);
    } else if (const auto* s = std::get_if<std::string>(&cell)) {
      raw = datetime_to_fractional_year(parse_iso_datetime(*s));
    } else {
      throw ParseError("column '" + col.name + "': expected a date");
    }
  } else {
    throw InvalidArgument("numeric_cell_scalar: column '" + col.name + "' is categorical");
  }
  return col.transform ? apply_power_transform(*col.transform, raw) : raw;
}

std::optional<CellPair> build_cell_pair(const ColumnSpec& col, const Cell& cell, const StringEmbedder& embedder) {
  if (std::holds_alternative<std::monostate>(cell)) return std::nullopt;
  if (col.embedding.size() != embedder.dim()) {
    throw DimensionError("column '" + col.name + "' embedding width differs from the embedder");
  }
  CellPair pair;
  pair.column = col.embedding;
  if (col.kind == ColumnKind::CategoricalString) {
    std::string text;
    if (const auto* s = std::get_if<std::string>(&cell)) {
      text = *s;
    } else if (const auto* d = std::get_if<double>(&cell)) {
      std::ostringstream os;
      os << *d;
      text = os.str();
    } else {
      text = to_iso_string(std::get<DatetimeValue>(cell));
    }
    StringEmbedding e = embedder.embed(text);
    if (e.missing) return std::nullopt;
    pair.cell = std::move(e.vector);
  } else {
    pair.cell = numeric_cell_scalar(col, cell) * col.embedding;
  }
  return pair;
}

void EncoderConfig::validate() const {
  if (d_lm < 1 || d_model < 1 || layers < 0 || heads < 1 || d_ff < 1 || projection_hidden < 1) {
    throw InvalidArgument("EncoderConfig: sizes must be positive");
  }
  if (d_model % heads != 0) throw InvalidArgument("EncoderConfig: d_model must be divisible by heads");
  for (int dim : matryoshka_dims) {
    if (dim < 1) throw InvalidArgument("EncoderConfig: projection dims must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw InvalidArgument("EncoderConfig: dropout must be in [0, 1)");
}

namespace {

MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Weight (fan_in x fan_out) and bias, both U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void init_linear(Param& w, Param& b, const std::string& prefix, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  w = Param(prefix + ".weight", uniform_matrix(fan_in, fan_out, bound, rng));
  b = Param(prefix + ".bias", uniform_matrix(1, fan_out, bound, rng));
}

void init_norm(Param& gain, Param& bias, const std::string& prefix, int width) {
  gain = Param(prefix + ".gain", MatrixXd::Ones(1, width));
  bias = Param(prefix + ".bias", MatrixXd::Zero(1, width));
}

RhoBlock make_rho(const std::string& prefix, int in, int out, std::mt19937_64& rng) {
  RhoBlock r;
  init_norm(r.norm_gain, r.norm_bias, prefix + ".norm", in);
  init_linear(r.weight, r.bias, prefix + ".linear", in, out, rng);
  return r;
}

template <typename Model, typename Out>
void collect_transformer(Model& m, std::vector<Out>& out) {
  out.push_back(&m.readout);
  for (auto& b : m.blocks) {
    for (auto* p : {&b.attn_norm_gain, &b.attn_norm_bias, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo, &b.bo,
                    &b.ff_norm_gain, &b.ff_norm_bias, &b.w1, &b.b1, &b.w2, &b.b2}) {
      out.push_back(p);
    }
  }
  out.push_back(&m.final_norm_gain);
  out.push_back(&m.final_norm_bias);
}

template <typename Model, typename Out>
void collect(Model& m, std::vector<Out>& out) {
  auto rho = [&out](auto& r) {
    out.push_back(&r.norm_gain);
    out.push_back(&r.norm_bias);
    out.push_back(&r.weight);
    out.push_back(&r.bias);
  };
  rho(m.rho_column);
  rho(m.rho_cell);
  collect_transformer(m, out);
  for (auto& h : m.projection_heads) {
    out.push_back(&h.w1);
    out.push_back(&h.b1);
    out.push_back(&h.w2);
    out.push_back(&h.b2);
  }
}

}  // namespace

EncoderModel::EncoderModel(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int d = config_.d_model;
  rho_column = make_rho("rho_column", config_.d_lm, d, rng);
  rho_cell = make_rho("rho_cell", config_.d_lm, d, rng);
  std::normal_distribution<double> normal(0.0, 0.02);
  MatrixXd t(1, d);
  for (Eigen::Index i = 0; i < d; ++i) t(0, i) = normal(rng);
  readout = Param("readout", std::move(t));
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l);
    EncoderLayer b;
    init_norm(b.attn_norm_gain, b.attn_norm_bias, p + ".attn_norm", d);
    init_linear(b.wq, b.bq, p + ".query", d, d, rng);
    init_linear(b.wk, b.bk, p + ".key", d, d, rng);
    init_linear(b.wv, b.bv, p + ".value", d, d, rng);
    init_linear(b.wo, b.bo, p + ".attn_out", d, d, rng);
    init_norm(b.ff_norm_gain, b.ff_norm_bias, p + ".ff_norm", d);
    init_linear(b.w1, b.b1, p + ".ff1", d, config_.d_ff, rng);
    init_linear(b.w2, b.b2, p + ".ff2", config_.d_ff, d, rng);
    blocks.push_back(std::move(b));
  }
  init_norm(final_norm_gain, final_norm_bias, "final_norm", d);
  for (int dim : config_.matryoshka_dims) {
    ProjectionHead h;
    h.dim = dim;
    const std::string p = "proj" + std::to_string(dim);
    init_linear(h.w1, h.b1, p + ".hidden", d, config_.projection_hidden, rng);
    init_linear(h.w2, h.b2, p + ".out", config_.projection_hidden, dim, rng);
    projection_heads.push_back(std::move(h));
  }
}

RhoBlock make_rho_block(const std::string& prefix, int in, int out, std::mt19937_64& rng) {
  return make_rho(prefix, in, out, rng);
}

const ProjectionHead* EncoderModel::head(int dim) const {
  for (const auto& h : projection_heads) {
    if (h.dim == dim) return &h;
  }
  return nullptr;
}

std::vector<Param*> EncoderModel::parameters() {
  std::vector<Param*> out;
  collect(*this, out);
  return out;
}

std::vector<const Param*> EncoderModel::parameters() const {
  std::vector<const Param*> out;
  collect(*this, out);
  return out;
}

Param* EncoderModel::find(const std::string& name) {
  for (auto* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

std::vector<const Param*> EncoderModel::transformer_parameters() const {
  std::vector<const Param*> out;
  collect_transformer(*this, out);
  return out;
}

void EncoderModel::freeze_transformer(bool train_rho) {
  std::vector<Param*> frozen;
  collect_transformer(*this, frozen);
  for (auto* p : frozen) p->requires_grad = false;
  for (auto* r : {&rho_column, &rho_cell}) {
    for (auto* p : {&r->norm_gain, &r->norm_bias, &r->weight, &r->bias}) p->requires_grad = train_rho;
  }
}

void EncoderModel::unfreeze_all() {
  for (auto* p : parameters()) p->requires_grad = true;
}

std::int64_t parameter_count(const EncoderModel& model) {
  std::int64_t n = 0;
  for (const auto* p : model.parameters()) n += p->size();
  return n;
}

std::int64_t parameter_count(const EncoderConfig& c) {
  const std::int64_t d = c.d_model;
  const std::int64_t rho = 2 * c.d_lm + c.d_lm * d + d;
  const std::int64_t layer = 2 * d + 4 * (d * d + d) + 2 * d + (d * c.d_ff + c.d_ff) + (c.d_ff * d + d);
  std::int64_t heads = 0;
  for (int dim : c.matryoshka_dims) heads += d * c.projection_hidden + c.projection_hidden + c.projection_hidden * dim + dim;
  return 2 * rho + d + c.layers * layer + 2 * d + heads;
}

Var<double> rho_forward(Tape<double>& tape, const RhoBlock& rho, Var<double> x) {
  Var<double> h = layer_norm(x, tape.param(rho.norm_gain), tape.param(rho.norm_bias));
  return linear(relu(h), tape.param(rho.weight), tape.param(rho.bias));
}

Var<double> assemble_input(Tape<double>& tape, const EncoderModel& model, const CellPairSequence& row) {
  return assemble_input(tape, model, row, model.rho_column, model.rho_cell);
}

Var<double> assemble_input(Tape<double>& tape, const EncoderModel& model, const CellPairSequence& row,
                           const RhoBlock& rho_column, const RhoBlock& rho_cell) {
  const auto k = static_cast<Eigen::Index>(row.pairs.size());
  if (k == 0) throw EmptyRow();
  const int d_lm = model.config().d_lm;
  MatrixXd columns(k, d_lm);
  MatrixXd cells(k, d_lm);
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto& p = row.pairs[static_cast<std::size_t>(j)];
    if (p.column.size() != d_lm || p.cell.size() != d_lm) {
      throw DimensionError("assemble_input: pair width differs from the model's d_lm");
    }
    columns.row(j) = p.column;
    cells.row(j) = p.cell;
  }
  Var<double> e = rho_forward(tape, rho_column, tape.constant(std::move(columns)));
  Var<double> x = rho_forward(tape, rho_cell, tape.constant(std::move(cells)));
  return vstack<double>({tape.param(model.readout), add(e, x)});
}

Var<double> encode_row(Tape<double>& tape, const EncoderModel& model, Var<double> z, std::mt19937_64* rng) {
  const auto& cfg = model.config();
  if (z.cols() != cfg.d_model) throw DimensionError("encode_row: input width differs from d_model");
  if (!z.value().allFinite()) throw NumericError("encode_row: non-finite input");
  const double p = rng != nullptr ? cfg.dropout : 0.0;
  Var<double> h = z;
  for (const auto& b : model.blocks) {
    Var<double> a = layer_norm(h, tape.param(b.attn_norm_gain), tape.param(b.attn_norm_bias));
    Var<double> q = linear(a, tape.param(b.wq), tape.param(b.bq));
    Var<double> k = linear(a, tape.param(b.wk), tape.param(b.bk));
    Var<double> v = linear(a, tape.param(b.wv), tape.param(b.bv));
    Var<double> attn = linear(multi_head_attention(q, k, v, cfg.heads), tape.param(b.wo), tape.param(b.bo));
    if (rng != nullptr) attn = dropout(attn, p, *rng);
    h = add(h, attn);
    Var<double> f = layer_norm(h, tape.param(b.ff_norm_gain), tape.param(b.ff_norm_bias));
    f = linear(relu(linear(f, tape.param(b.w1), tape.param(b.b1))), tape.param(b.w2), tape.param(b.b2));
    if (rng != nullptr) f = dropout(f, p, *rng);
    h = add(h, f);
  }
  h = layer_norm(h, tape.param(model.final_norm_gain), tape.param(model.final_norm_bias));
  return rows(h, 0, 1);
}

Var<double> project(Tape<double>& tape, const ProjectionHead& head, Var<double> h) {
  return linear(linear(h, tape.param(head.w1), tape.param(head.b1)), tape.param(head.w2), tape.param(head.b2));
}

RowEmbedding encode(const EncoderModel& model, const CellPairSequence& row) {
  if (row.pairs.empty()) return {RowVectorXd::Zero(model.config().d_model), true};
  Tape<double> tape(false);
  Var<double> z = assemble_input(tape, model, row);
  return {encode_row(tape, model, z).value(), false};
}

std::map<int, RowVectorXd> project_matryoshka(const EncoderModel& model, const RowEmbedding& h) {
  std::map<int, RowVectorXd> out;
  Tape<double> tape(false);
  Var<double> in = tape.constant(h.vector);
  for (const auto& head : model.projection_heads) out[head.dim] = project(tape, head, in).value();
  return out;
}

}  // namespace tartekit
