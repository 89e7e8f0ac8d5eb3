#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tartekit/encoder/model.hpp"
#include "tartekit/ingest/table.hpp"

namespace tartekit {

// Turns table rows into column-cell pair sequences. Numerical and datetime
// columns get power transforms fitted on the rows passed at construction
// (the train split), never on test rows.
class TablePreprocessor {
 public:
  TablePreprocessor(const TableSchema& schema, const Table& table, const std::vector<std::size_t>& fit_rows,
                    const StringEmbedder& embedder);
  // Rebuilds from stored column specs (e.g. loaded from a model file).
  TablePreprocessor(std::vector<ColumnInfo> columns, std::vector<ColumnSpec> specs, const StringEmbedder& embedder);

  // Unparseable cells in numerical/datetime columns count as missing.
  CellPairSequence row(const Table& table, std::size_t i) const;
  std::vector<CellPairSequence> rows(const Table& table, const std::vector<std::size_t>& indices) const;
  std::vector<CellPairSequence> rows(const Table& table) const;

  const std::vector<ColumnInfo>& columns() const { return columns_; }
  const std::vector<ColumnSpec>& specs() const { return specs_; }
  // Points every column at its position in `table`, matched by name.
  void bind(const Table& table);

 private:
  std::vector<ColumnInfo> columns_;
  std::vector<ColumnSpec> specs_;
  const StringEmbedder* embedder_;
};

struct FeatureMatrix {
  MatrixXd values;           // n x q, zero rows where missing
  std::vector<char> missing; // row had no observed cell

  // values with the missing flag appended as a last column.
  MatrixXd with_missing_flag() const;
};

// Eval-mode row embeddings. dim == d_model gives the readout itself, any
// other dim goes through the projection head of that width.
FeatureMatrix featurize(const EncoderModel& model, const std::vector<CellPairSequence>& rows, int dim);

// Binary feature cache:
//   8 bytes "TARTEFEA", u64 n, u64 q, u32 + N checkpoint id,
//   n*q f64 row-major, n bytes missing flags.
void write_feature_cache(const std::filesystem::path& path, const FeatureMatrix& f, const std::string& checkpoint_id);
FeatureMatrix read_feature_cache(const std::filesystem::path& path, std::string* checkpoint_id = nullptr);

// Prediction exchange file: header "row_id,prediction", one row per line.
struct Predictions {
  std::vector<std::string> row_ids;
  std::vector<double> values;
};
void write_predictions(const std::filesystem::path& path, const Predictions& p);
Predictions read_predictions(const std::filesystem::path& path);

}  // namespace tartekit
