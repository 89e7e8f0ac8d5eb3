#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "tartekit/ingest/table.hpp"

namespace tartekit {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool parses_as_number(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(v);
}

std::mt19937_64 split_rng(const SplitSpec& spec) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(spec.split_index)};
  return std::mt19937_64(seq);
}

}  // namespace

std::size_t Table::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw InvalidArgument("no column named '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

Table parse_csv(std::istream& in, const std::string& source) {
  std::vector<std::vector<std::string>> records;
  std::vector<long> record_lines;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;       // inside a quoted field
  bool was_quoted = false;   // current field started with a quote
  bool any = false;          // current record has content
  long line = 1, record_line = 1;
  auto end_field = [&] {
    record.push_back(field);
    field.clear();
    was_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty() && !any)) {
      records.push_back(std::move(record));
      record_lines.push_back(record_line);
    }
    record.clear();
    any = false;
  };
  char c;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (!any) record_line = line;
    switch (c) {
      case '"':
        if (!field.empty()) {
          throw ParseError(source + ":" + std::to_string(line) + ": quote inside an unquoted field");
        }
        quoted = was_quoted = any = true;
        break;
      case ',':
        any = true;
        end_field();
        break;
      case '\r':
        if (in.peek() == '\n') break;
        [[fallthrough]];
      case '\n':
        end_record();
        ++line;
        break;
      default:
        if (was_quoted) {
          throw ParseError(source + ":" + std::to_string(line) + ": text after a closing quote");
        }
        any = true;
        field.push_back(c);
    }
  }
  if (quoted) throw ParseError(source + ": unterminated quoted field starting on line " + std::to_string(record_line));
  if (any || !field.empty()) end_record();

  if (records.empty()) throw ParseError(source + ": empty file, a header row is required");
  Table t;
  t.header = std::move(records.front());
  std::set<std::string> seen;
  for (const auto& h : t.header) {
    if (!seen.insert(h).second) throw ParseError(source + ": duplicate column header '" + h + "'");
  }
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].size() != t.header.size()) {
      throw ParseError(source + ":" + std::to_string(record_lines[i]) + ": expected " +
                       std::to_string(t.header.size()) + " fields, got " + std::to_string(records[i].size()));
    }
    t.rows.push_back(std::move(records[i]));
  }
  return t;
}

Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_csv(in, path.string());
}

void write_csv(std::ostream& out, const Table& table) {
  auto put = [&](const std::vector<std::string>& rec) {
    for (std::size_t i = 0; i < rec.size(); ++i) {
      if (i) out << ',';
      const std::string& f = rec[i];
      if (f.find_first_of(",\"\r\n") == std::string::npos) {
        out << f;
        continue;
      }
      out << '"';
      for (char c : f) {
        if (c == '"') out << '"';
        out << c;
      }
      out << '"';
    }
    out << '\n';
  };
  put(table.header);
  for (const auto& r : table.rows) put(r);
}

bool is_missing_token(std::string_view text) {
  std::string t = trim(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  return t.empty() || t == "na" || t == "nan" || t == "null";
}

std::string to_string(TaskKind task) { return task == TaskKind::Regression ? "reg" : "clf"; }

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "reg" || s == "regression") return TaskKind::Regression;
  if (s == "clf" || s == "classification") return TaskKind::Classification;
  throw InvalidArgument("unknown task '" + s + "' (expected reg or clf)");
}

ColumnInfo infer_column(const Table& table, std::size_t column) {
  ColumnInfo info;
  info.name = table.header.at(column);
  info.index = column;
  std::set<std::string> distinct;
  long present = 0, numbers = 0, dates = 0;
  for (const auto& row : table.rows) {
    const std::string v = trim(row[column]);
    if (is_missing_token(v)) {
      ++info.missing;
      continue;
    }
    ++present;
    distinct.insert(v);
    if (parses_as_number(v)) ++numbers;
    if (try_parse_iso_datetime(v)) ++dates;
  }
  info.distinct = static_cast<long>(distinct.size());
  info.high_cardinality = info.distinct > kHighCardinality;
  if (present > 0 && numbers >= kTypeParseThreshold * present) {
    info.kind = ColumnKind::Numerical;
  } else if (present > 0 && dates >= kTypeParseThreshold * present) {
    info.kind = ColumnKind::Datetime;
  } else {
    info.kind = ColumnKind::CategoricalString;
  }
  return info;
}

TableSchema infer_schema(const Table& table, const std::string& target, TaskKind task) {
  if (table.header.empty()) throw ParseError("table has no columns");
  std::set<std::string> seen;
  for (const auto& h : table.header) {
    if (!seen.insert(h).second) throw ParseError("duplicate column header '" + h + "'");
  }
  TableSchema schema;
  schema.target = target;
  schema.task = task;
  const std::size_t target_index = target.empty() ? table.n_cols() : table.column(target);
  for (std::size_t j = 0; j < table.n_cols(); ++j) {
    if (j != target_index) schema.features.push_back(infer_column(table, j));
  }
  return schema;
}

std::vector<double> target_values(const Table& table, const TableSchema& schema) {
  if (schema.target.empty()) throw InvalidArgument("schema has no target column");
  const std::size_t j = table.column(schema.target);
  std::vector<std::string> raw;
  raw.reserve(table.n_rows());
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    std::string v = trim(table.rows[i][j]);
    if (is_missing_token(v)) {
      throw InvalidArgument("target '" + schema.target + "' is missing on data row " + std::to_string(i + 1));
    }
    raw.push_back(std::move(v));
  }
  std::vector<double> y;
  y.reserve(raw.size());
  if (schema.task == TaskKind::Regression) {
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (!parses_as_number(raw[i])) {
        throw ParseError("target '" + schema.target + "' row " + std::to_string(i + 1) + ": '" + raw[i] +
                         "' is not a number");
      }
      y.push_back(std::strtod(raw[i].c_str(), nullptr));
    }
    return y;
  }
  const std::set<std::string> labels(raw.begin(), raw.end());
  if (labels.size() != 2) {
    throw InvalidArgument("classification target '" + schema.target + "' must have exactly two labels, found " +
                          std::to_string(labels.size()));
  }
  std::string positive = *labels.rbegin();
  if (std::all_of(labels.begin(), labels.end(), parses_as_number)) {
    const double a = std::strtod(labels.begin()->c_str(), nullptr);
    const double b = std::strtod(labels.rbegin()->c_str(), nullptr);
    positive = a > b ? *labels.begin() : *labels.rbegin();
  }
  for (const auto& v : raw) y.push_back(v == positive ? 1.0 : 0.0);
  return y;
}

Split make_split(std::size_t n_rows, const SplitSpec& spec, const std::vector<double>* labels) {
  if (spec.train_size < 1) throw InvalidArgument("train size must be positive");
  const auto ts = static_cast<std::size_t>(spec.train_size);
  if (n_rows <= ts) {
    throw InvalidArgument("table has " + std::to_string(n_rows) + " rows; train size " + std::to_string(ts) +
                          " leaves no test rows");
  }
  if (labels && labels->size() != n_rows) throw DimensionError("labels do not match the number of rows");
  std::mt19937_64 rng = split_rng(spec);
  Split split;
  if (!labels) {
    std::vector<std::size_t> idx(n_rows);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    split.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(ts));
    split.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(ts), idx.end());
    return split;
  }

  std::map<double, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < n_rows; ++i) classes[(*labels)[i]].push_back(i);
  if (classes.size() > ts) {
    throw InvalidArgument("train size " + std::to_string(ts) + " cannot hold all " + std::to_string(classes.size()) +
                          " classes; every class must appear in train");
  }
  // Largest-remainder allocation with a floor of one row per class.
  std::vector<std::size_t> quota;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0, k = 0;
  for (auto& [label, members] : classes) {
    std::shuffle(members.begin(), members.end(), rng);
    const double exact = static_cast<double>(ts) * static_cast<double>(members.size()) / static_cast<double>(n_rows);
    std::size_t q = std::clamp<std::size_t>(static_cast<std::size_t>(std::floor(exact)), 1, members.size());
    quota.push_back(q);
    remainders.emplace_back(exact - std::floor(exact), k++);
    assigned += q;
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](auto a, auto b) { return a.first > b.first; });
  std::vector<std::size_t> sizes;
  for (const auto& [label, members] : classes) sizes.push_back(members.size());
  for (std::size_t pass = 0; assigned < ts; ++pass) {
    const std::size_t c = remainders[pass % remainders.size()].second;
    if (quota[c] < sizes[c]) {
      ++quota[c];
      ++assigned;
    }
  }
  while (assigned > ts) {
    const auto c = static_cast<std::size_t>(std::max_element(quota.begin(), quota.end()) - quota.begin());
    --quota[c];
    --assigned;
  }
  k = 0;
  for (const auto& [label, members] : classes) {
    split.train.insert(split.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[k]));
    split.test.insert(split.test.end(), members.begin() + static_cast<std::ptrdiff_t>(quota[k]), members.end());
    ++k;
  }
  std::shuffle(split.train.begin(), split.train.end(), rng);
  std::shuffle(split.test.begin(), split.test.end(), rng);
  for (const auto& [label, members] : classes) {
    (void)members;
    if (std::none_of(split.train.begin(), split.train.end(), [&](std::size_t i) { return (*labels)[i] == label; })) {
      throw InvalidArgument("class absent from the train split");
    }
  }
  return split;
}

}  // namespace tartekit
