#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "tartekit/encoder/model.hpp"

namespace tartekit {

// Rows of raw text cells under a header. Every row has header.size() cells.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t n_rows() const { return rows.size(); }
  std::size_t n_cols() const { return header.size(); }
  std::size_t column(const std::string& name) const;  // throws InvalidArgument
};

// RFC 4180: comma separated, double-quote quoting with "" escapes, CRLF or
// LF line ends, quoted fields may span lines. The first record is the header.
Table parse_csv(std::istream& in, const std::string& source = "<stream>");
Table read_csv(const std::filesystem::path& path);
void write_csv(std::ostream& out, const Table& table);

// "", "NA", "NaN", "null", compared case-insensitively after trimming.
bool is_missing_token(std::string_view text);

enum class TaskKind { Regression, Classification };
std::string to_string(TaskKind task);  // "reg", "clf"
TaskKind task_kind_from_string(const std::string& s);

inline constexpr double kTypeParseThreshold = 0.95;
inline constexpr long kHighCardinality = 40;

struct ColumnInfo {
  std::string name;
  std::size_t index = 0;  // position in the table
  ColumnKind kind = ColumnKind::CategoricalString;
  long distinct = 0;      // distinct non-missing values
  long missing = 0;
  bool high_cardinality = false;
};

struct TableSchema {
  std::vector<ColumnInfo> features;
  std::string target;
  TaskKind task = TaskKind::Regression;
};

ColumnInfo infer_column(const Table& table, std::size_t column);

// Kinds for every column except the target (which may be empty).
TableSchema infer_schema(const Table& table, const std::string& target = "", TaskKind task = TaskKind::Regression);

// Target as doubles. Classification labels must take exactly two values;
// numeric labels {0,1} keep their meaning, otherwise the lexicographically
// larger label is 1. Missing targets are an error.
std::vector<double> target_values(const Table& table, const TableSchema& schema);

inline const std::vector<int> kTrainSizes{32, 64, 128, 256, 512, 1024, 10000};
inline constexpr int kSplitsPerSize = 10;

struct SplitSpec {
  int train_size = 32;
  std::uint64_t seed = 0;
  int split_index = 0;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Seeded shuffle; the first train_size rows train, the rest test. With labels
// the split is stratified: each class gets a proportional share of the train
// rows and at least one.
Split make_split(std::size_t n_rows, const SplitSpec& spec, const std::vector<double>* labels = nullptr);

}  // namespace tartekit
