#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <set>

#include "tartekit/downstream/vectorizer.hpp"

namespace tartekit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::optional<double> as_number(ColumnKind kind, const std::string& v) {
  if (kind == ColumnKind::Numerical) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(x)) return std::nullopt;
    return x;
  }
  if (auto d = try_parse_iso_datetime(v)) return datetime_to_fractional_year(*d);
  return std::nullopt;
}

}  // namespace

TableVectorizer::TableVectorizer(const TableSchema& schema, const Table& table,
                                 const std::vector<std::size_t>& fit_rows) {
  for (const ColumnInfo& info : schema.features) {
    Column c;
    c.info = info;
    if (info.kind != ColumnKind::CategoricalString) {
      std::vector<double> values;
      for (std::size_t i : fit_rows) {
        const std::string v = trim(table.rows.at(i).at(info.index));
        if (is_missing_token(v)) continue;
        if (auto x = as_number(info.kind, v)) values.push_back(*x);
      }
      if (std::set<double>(values.begin(), values.end()).size() >= 2) {
        c.transform = fit_power_transform(values, info.name);
      } else {
        c.transform = PowerTransform::identity(info.name);
        if (!values.empty()) c.transform->mean = values.front();
      }
    } else {
      std::map<std::string, long> counts;
      for (std::size_t i : fit_rows) {
        const std::string v = trim(table.rows.at(i).at(info.index));
        if (!is_missing_token(v)) ++counts[v];
      }
      std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
      // Most frequent first; ties broken by the value so the result is stable.
      std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
      if (ranked.size() > static_cast<std::size_t>(kHighCardinality)) {
        ranked.resize(static_cast<std::size_t>(kHighCardinality));
        c.has_other = true;
      }
      std::sort(ranked.begin(), ranked.end());
      for (const auto& [value, count] : ranked) c.levels.emplace(value, c.levels.size());
    }
    columns_.push_back(std::move(c));
  }
  layout();
}

TableVectorizer::TableVectorizer(std::vector<Column> columns) : columns_(std::move(columns)) { layout(); }

void TableVectorizer::layout() {
  names_.clear();
  width_ = 0;
  for (Column& c : columns_) {
    c.offset = width_;
    if (c.transform) {
      names_.push_back(c.info.name);
      width_ += 1;
      continue;
    }
    std::vector<std::string> by_slot(c.levels.size());
    for (const auto& [value, slot] : c.levels) {
      if (slot >= by_slot.size()) throw InvalidArgument("vectorizer: level slots of '" + c.info.name + "' are not 0..n-1");
      by_slot[slot] = value;
    }
    for (const auto& v : by_slot) names_.push_back(c.info.name + "=" + v);
    if (c.has_other) names_.push_back(c.info.name + "=<other>");
    width_ += c.levels.size() + (c.has_other ? 1 : 0);
  }
}

void TableVectorizer::bind(const Table& table) {
  for (Column& c : columns_) c.info.index = table.column(c.info.name);
}

MatrixXd TableVectorizer::transform(const Table& table, const std::vector<std::size_t>& rows) const {
  MatrixXd out = MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width_));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& raw = table.rows.at(rows[r]);
    const auto i = static_cast<Eigen::Index>(r);
    for (const Column& c : columns_) {
      const std::string v = trim(raw.at(c.info.index));
      if (is_missing_token(v)) continue;
      if (c.transform) {
        if (auto x = as_number(c.info.kind, v)) {
          out(i, static_cast<Eigen::Index>(c.offset)) = apply_power_transform(*c.transform, *x);
        }
        continue;
      }
      if (auto it = c.levels.find(v); it != c.levels.end()) {
        out(i, static_cast<Eigen::Index>(c.offset + it->second)) = 1.0;
      } else if (c.has_other) {
        out(i, static_cast<Eigen::Index>(c.offset + c.levels.size())) = 1.0;
      }
    }
  }
  return out;
}

MatrixXd TableVectorizer::transform(const Table& table) const {
  std::vector<std::size_t> all(table.n_rows());
  std::iota(all.begin(), all.end(), 0);
  return transform(table, all);
}

}  // namespace tartekit
