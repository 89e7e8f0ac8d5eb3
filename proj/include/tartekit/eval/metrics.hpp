#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "tartekit/ingest/table.hpp"

namespace tartekit {

// 1 - SS_res / SS_tot. Needs two or more targets with nonzero variance.
double metric_r2(const std::vector<double>& y, const std::vector<double>& yhat);

// Rank statistic with average ranks for ties. Labels are 0/1; both classes
// must be present.
double metric_auroc(const std::vector<double>& y, const std::vector<double>& scores);

// Ranks 1..n of values in ascending order, ties sharing their mean rank.
std::vector<double> average_ranks_of(const std::vector<double>& values);

struct EvalRecord {
  std::string dataset;
  std::string method;
  int train_size = 0;
  int split = 0;
  std::string metric;  // "r2" or "auroc"
  double value = 0.0;
  double seconds = 0.0;
};

struct NormalizedScore {
  std::string dataset;
  std::string method;
  int train_size = 0;
  double score = 0.0;
};

// Per dataset, the mean metric of each (method, train size) cell rescaled so
// the best cell is 1 and the worst 0. A dataset whose cells are all equal
// gets 0.5 everywhere, with a warning.
std::vector<NormalizedScore> normalize_scores(const std::vector<EvalRecord>& records);

// Mean rank per method over (dataset, train size, split) cells, 1 = best.
// Cells not shared by every method are dropped with a warning.
std::map<std::string, double> average_ranks(const std::vector<EvalRecord>& records);

struct ParetoPoint {
  std::string label;
  double runtime = 0.0;
  double score = 0.0;
};

// Points no other point dominates (runtime <= and score >=, one strictly),
// in input order.
std::vector<ParetoPoint> pareto_frontier(const std::vector<ParetoPoint>& points);

void write_records(std::ostream& out, const std::vector<EvalRecord>& records);
std::vector<EvalRecord> read_records(std::istream& in, const std::string& source = "<records>");
void write_scores(std::ostream& out, const std::vector<NormalizedScore>& scores);
void write_ranks(std::ostream& out, const std::map<std::string, double>& ranks);
void write_pareto(std::ostream& out, const std::vector<ParetoPoint>& frontier);

}  // namespace tartekit
