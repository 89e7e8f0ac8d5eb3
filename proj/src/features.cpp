#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "tartekit/downstream/features.hpp"

namespace tartekit {

namespace {

constexpr char kFeatureMagic[8] = {'T', 'A', 'R', 'T', 'E', 'F', 'E', 'A'};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::optional<double> column_number(ColumnKind kind, const std::string& text) {
  if (kind == ColumnKind::Numerical) {
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (end != text.c_str() + text.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  }
  auto d = try_parse_iso_datetime(text);
  if (!d) return std::nullopt;
  return datetime_to_fractional_year(*d);
}

}  // namespace

TablePreprocessor::TablePreprocessor(const TableSchema& schema, const Table& table,
                                     const std::vector<std::size_t>& fit_rows, const StringEmbedder& embedder)
    : columns_(schema.features), embedder_(&embedder) {
  for (const ColumnInfo& c : columns_) {
    std::optional<PowerTransform> transform;
    if (c.kind != ColumnKind::CategoricalString) {
      std::vector<double> values;
      for (std::size_t i : fit_rows) {
        const std::string v = trim(table.rows.at(i).at(c.index));
        if (is_missing_token(v)) continue;
        if (auto x = column_number(c.kind, v)) values.push_back(*x);
      }
      if (std::set<double>(values.begin(), values.end()).size() >= 2) {
        transform = fit_power_transform(values, c.name);
      } else {
        // A constant train column carries no signal; center it so it stays bounded.
        transform = PowerTransform::identity(c.name);
        if (!values.empty()) transform->mean = values.front();
      }
    }
    specs_.push_back(make_column_spec(c.name, c.kind, embedder, transform));
  }
}

TablePreprocessor::TablePreprocessor(std::vector<ColumnInfo> columns, std::vector<ColumnSpec> specs,
                                     const StringEmbedder& embedder)
    : columns_(std::move(columns)), specs_(std::move(specs)), embedder_(&embedder) {
  if (columns_.size() != specs_.size()) throw DimensionError("preprocessor: column and spec counts differ");
}

void TablePreprocessor::bind(const Table& table) {
  for (ColumnInfo& c : columns_) c.index = table.column(c.name);
}

CellPairSequence TablePreprocessor::row(const Table& table, std::size_t i) const {
  CellPairSequence seq;
  seq.row_index = static_cast<long>(i);
  const auto& raw = table.rows.at(i);
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    const std::string v = trim(raw.at(columns_[j].index));
    if (is_missing_token(v)) continue;
    try {
      if (auto pair = build_cell_pair(specs_[j], Cell{v}, *embedder_)) seq.pairs.push_back(std::move(*pair));
    } catch (const ParseError&) {
      // Stray text in a numeric or date column is treated like a blank.
    }
  }
  return seq;
}

std::vector<CellPairSequence> TablePreprocessor::rows(const Table& table,
                                                      const std::vector<std::size_t>& indices) const {
  std::vector<CellPairSequence> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(row(table, i));
  return out;
}

std::vector<CellPairSequence> TablePreprocessor::rows(const Table& table) const {
  std::vector<CellPairSequence> out;
  out.reserve(table.n_rows());
  for (std::size_t i = 0; i < table.n_rows(); ++i) out.push_back(row(table, i));
  return out;
}

MatrixXd FeatureMatrix::with_missing_flag() const {
  MatrixXd out(values.rows(), values.cols() + 1);
  out.leftCols(values.cols()) = values;
  for (Eigen::Index i = 0; i < values.rows(); ++i) out(i, values.cols()) = missing[i] ? 1.0 : 0.0;
  return out;
}

FeatureMatrix featurize(const EncoderModel& model, const std::vector<CellPairSequence>& rows, int dim) {
  const ProjectionHead* head = nullptr;
  if (dim != model.config().d_model) {
    head = model.head(dim);
    if (head == nullptr) {
      throw InvalidArgument("featurize: dim " + std::to_string(dim) + " is neither the model width " +
                            std::to_string(model.config().d_model) + " nor a projection head");
    }
  }
  FeatureMatrix f;
  f.values = MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), dim);
  f.missing.assign(rows.size(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].pairs.empty()) {
      f.missing[i] = 1;
      continue;
    }
    Tape<double> tape(false);
    Var<double> h = encode_row(tape, model, assemble_input(tape, model, rows[i]));
    if (head) h = project(tape, *head, h);
    f.values.row(static_cast<Eigen::Index>(i)) = h.value();
  }
  return f;
}

void write_feature_cache(const std::filesystem::path& path, const FeatureMatrix& f, const std::string& checkpoint_id) {
  if (f.missing.size() != static_cast<std::size_t>(f.values.rows())) {
    throw DimensionError("feature cache: missing flags do not match rows");
  }
  std::string out(kFeatureMagic, sizeof kFeatureMagic);
  binary::put<std::uint64_t>(out, static_cast<std::uint64_t>(f.values.rows()));
  binary::put<std::uint64_t>(out, static_cast<std::uint64_t>(f.values.cols()));
  binary::put_string(out, checkpoint_id);
  for (Eigen::Index i = 0; i < f.values.size(); ++i) binary::put<double>(out, f.values.data()[i]);
  for (char m : f.missing) out.push_back(m ? 1 : 0);
  binary::write_file(path, out);
}

FeatureMatrix read_feature_cache(const std::filesystem::path& path, std::string* checkpoint_id) {
  const std::string bytes = binary::read_file(path);
  if (bytes.size() < sizeof kFeatureMagic || bytes.compare(0, 8, kFeatureMagic, 8) != 0) {
    throw ParseError(path.string() + ": not a feature cache");
  }
  binary::Reader r(bytes, "feature cache");
  for (int i = 0; i < 8; ++i) r.get<char>();
  const auto n = r.get<std::uint64_t>();
  const auto q = r.get<std::uint64_t>();
  std::string id = r.get_string();
  r.need(n * q * sizeof(double) + n);
  FeatureMatrix f;
  f.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q));
  for (Eigen::Index i = 0; i < f.values.size(); ++i) f.values.data()[i] = r.get<double>();
  f.missing.resize(n);
  for (auto& m : f.missing) m = r.get<char>();
  if (!r.done()) throw ParseError(path.string() + ": trailing bytes in feature cache");
  if (checkpoint_id) *checkpoint_id = std::move(id);
  return f;
}

void write_predictions(const std::filesystem::path& path, const Predictions& p) {
  if (p.row_ids.size() != p.values.size()) throw DimensionError("predictions: ids and values differ in length");
  Table t;
  t.header = {"row_id", "prediction"};
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    std::ostringstream v;
    v.precision(17);
    v << p.values[i];
    t.rows.push_back({p.row_ids[i], v.str()});
  }
  std::ostringstream os;
  write_csv(os, t);
  binary::write_file(path, os.str());
}

Predictions read_predictions(const std::filesystem::path& path) {
  std::istringstream in(binary::read_file(path));
  const Table t = parse_csv(in, path.string());
  if (t.header.size() != 2 || t.header[0] != "row_id" || t.header[1] != "prediction") {
    throw ParseError(path.string() + ": expected header row_id,prediction");
  }
  Predictions p;
  for (std::size_t i = 0; i < t.n_rows(); ++i) {
    const std::string& v = t.rows[i][1];
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(x)) {
      throw ParseError(path.string() + ":" + std::to_string(i + 2) + ": prediction '" + v + "' is not a number");
    }
    p.row_ids.push_back(t.rows[i][0]);
    p.values.push_back(x);
  }
  return p;
}

}  // namespace tartekit
