#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tartekit/ingest/table.hpp"

namespace tartekit {

// Plain tabular encoding used for built-in base learners: power-transformed
// numbers and dates (missing -> 0), one-hot strings. Columns with more than
// 40 distinct train values keep their 40 most frequent ones plus "other".
class TableVectorizer {
 public:
  struct Column {
    ColumnInfo info;
    std::optional<PowerTransform> transform;    // numerical and datetime
    std::map<std::string, std::size_t> levels;  // string value -> slot
    bool has_other = false;
    std::size_t offset = 0;  // first output column, set by the constructor
  };

  TableVectorizer(const TableSchema& schema, const Table& table, const std::vector<std::size_t>& fit_rows);
  // Rebuilds a fitted vectorizer; offsets are recomputed.
  explicit TableVectorizer(std::vector<Column> columns);

  MatrixXd transform(const Table& table, const std::vector<std::size_t>& rows) const;
  MatrixXd transform(const Table& table) const;
  std::size_t width() const { return width_; }
  const std::vector<std::string>& feature_names() const { return names_; }
  const std::vector<Column>& columns() const { return columns_; }
  // Points every column at its position in `table`, matched by name.
  void bind(const Table& table);

 private:
  void layout();

  std::vector<Column> columns_;
  std::vector<std::string> names_;
  std::size_t width_ = 0;
};

}  // namespace tartekit
