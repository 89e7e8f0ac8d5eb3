#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "tartekit/eval/metrics.hpp"

namespace tartekit {

namespace {

std::string number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double to_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw ParseError(where + ": '" + s + "' is not a number");
  return v;
}

}  // namespace

double metric_r2(const std::vector<double>& y, const std::vector<double>& yhat) {
  if (y.size() != yhat.size()) throw DimensionError("r2: targets and predictions differ in length");
  if (y.size() < 2) throw InvalidArgument("r2 needs at least two values");
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  if (!(ss_tot > 0.0)) throw InvalidArgument("r2 is undefined for a constant target");
  return 1.0 - ss_res / ss_tot;
}

std::vector<double> average_ranks_of(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double metric_auroc(const std::vector<double>& y, const std::vector<double>& scores) {
  if (y.size() != scores.size()) throw DimensionError("auroc: labels and scores differ in length");
  double n_pos = 0.0, n_neg = 0.0, rank_sum = 0.0;
  const std::vector<double> ranks = average_ranks_of(scores);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 1.0) {
      n_pos += 1.0;
      rank_sum += ranks[i];
    } else if (y[i] == 0.0) {
      n_neg += 1.0;
    } else {
      throw InvalidArgument("auroc: labels must be 0 or 1");
    }
  }
  if (n_pos == 0.0 || n_neg == 0.0) throw InvalidArgument("auroc needs both classes in the test set");
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

std::vector<NormalizedScore> normalize_scores(const std::vector<EvalRecord>& records) {
  // dataset -> (method, size) -> (sum, count)
  std::map<std::string, std::map<std::pair<std::string, int>, std::pair<double, int>>> cells;
  std::map<std::string, int> per_dataset;
  for (const auto& r : records) {
    if (!std::isfinite(r.value)) throw NumericError("normalize_scores: non-finite metric for " + r.method);
    auto& c = cells[r.dataset][{r.method, r.train_size}];
    c.first += r.value;
    c.second += 1;
    ++per_dataset[r.dataset];
  }
  std::vector<NormalizedScore> out;
  for (const auto& [dataset, by_cell] : cells) {
    if (per_dataset[dataset] < 2) {
      throw InvalidArgument("normalize_scores: dataset '" + dataset + "' has fewer than two records");
    }
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& [key, sc] : by_cell) {
      const double m = sc.first / sc.second;
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
    if (hi == lo) warn("normalize_scores: all cells of dataset '" + dataset + "' are equal; scores set to 0.5");
    for (const auto& [key, sc] : by_cell) {
      const double m = sc.first / sc.second;
      out.push_back({dataset, key.first, key.second, hi == lo ? 0.5 : (m - lo) / (hi - lo)});
    }
  }
  return out;
}

std::map<std::string, double> average_ranks(const std::vector<EvalRecord>& records) {
  using Cell = std::tuple<std::string, int, int>;
  std::map<Cell, std::map<std::string, double>> cells;
  std::set<std::string> methods;
  for (const auto& r : records) {
    cells[{r.dataset, r.train_size, r.split}][r.method] = r.value;
    methods.insert(r.method);
  }
  std::map<std::string, double> sum;
  int used = 0, dropped = 0;
  for (const auto& [cell, values] : cells) {
    if (values.size() != methods.size()) {
      ++dropped;
      continue;
    }
    std::vector<double> negated;  // higher metric = better = rank 1
    for (const auto& [m, v] : values) negated.push_back(-v);
    const std::vector<double> ranks = average_ranks_of(negated);
    std::size_t k = 0;
    for (const auto& [m, v] : values) sum[m] += ranks[k++];
    ++used;
  }
  if (dropped > 0) {
    warn("average_ranks: " + std::to_string(dropped) + " cells lack some method and were left out");
  }
  if (used == 0) throw InvalidArgument("average_ranks: no cell is shared by every method");
  for (auto& [m, s] : sum) s /= used;
  return sum;
}

std::vector<ParetoPoint> pareto_frontier(const std::vector<ParetoPoint>& points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  // Sweep by runtime (ties: best score first); a point survives when its
  // score beats everything at least as fast.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].runtime != points[b].runtime) return points[a].runtime < points[b].runtime;
    return points[a].score > points[b].score;
  });
  std::vector<char> keep(points.size(), 0);
  double best = -INFINITY;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && points[order[j]].runtime == points[order[i]].runtime) ++j;
    const double top = points[order[i]].score;  // best within this runtime
    if (top > best) {
      for (std::size_t k = i; k < j && points[order[k]].score == top; ++k) keep[order[k]] = 1;
      best = top;
    }
    i = j;
  }
  std::vector<ParetoPoint> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (keep[i]) out.push_back(points[i]);
  }
  return out;
}

void write_records(std::ostream& out, const std::vector<EvalRecord>& records) {
  Table t;
  t.header = {"dataset", "method", "train_size", "split", "metric", "value", "seconds"};
  for (const auto& r : records) {
    t.rows.push_back({r.dataset, r.method, std::to_string(r.train_size), std::to_string(r.split), r.metric,
                      number(r.value), number(r.seconds)});
  }
  write_csv(out, t);
}

std::vector<EvalRecord> read_records(std::istream& in, const std::string& source) {
  const Table t = parse_csv(in, source);
  const std::size_t c_dataset = t.column("dataset"), c_method = t.column("method"),
                    c_size = t.column("train_size"), c_split = t.column("split"), c_metric = t.column("metric"),
                    c_value = t.column("value"), c_seconds = t.column("seconds");
  std::vector<EvalRecord> out;
  for (std::size_t i = 0; i < t.n_rows(); ++i) {
    const auto& row = t.rows[i];
    const std::string where = source + ":" + std::to_string(i + 2);
    EvalRecord r;
    r.dataset = row[c_dataset];
    r.method = row[c_method];
    r.train_size = static_cast<int>(to_double(row[c_size], where));
    r.split = static_cast<int>(to_double(row[c_split], where));
    r.metric = row[c_metric];
    r.value = to_double(row[c_value], where);
    r.seconds = to_double(row[c_seconds], where);
    if (r.metric != "r2" && r.metric != "auroc") throw ParseError(where + ": unknown metric '" + r.metric + "'");
    if (r.seconds < 0.0) throw ParseError(where + ": negative runtime");
    out.push_back(std::move(r));
  }
  return out;
}

void write_scores(std::ostream& out, const std::vector<NormalizedScore>& scores) {
  Table t;
  t.header = {"dataset", "method", "train_size", "score"};
  for (const auto& s : scores) t.rows.push_back({s.dataset, s.method, std::to_string(s.train_size), number(s.score)});
  write_csv(out, t);
}

void write_ranks(std::ostream& out, const std::map<std::string, double>& ranks) {
  Table t;
  t.header = {"method", "average_rank"};
  for (const auto& [m, r] : ranks) t.rows.push_back({m, number(r)});
  write_csv(out, t);
}

void write_pareto(std::ostream& out, const std::vector<ParetoPoint>& frontier) {
  Table t;
  t.header = {"method", "runtime", "score"};
  for (const auto& p : frontier) t.rows.push_back({p.label, number(p.runtime), number(p.score)});
  write_csv(out, t);
}

}  // namespace tartekit
