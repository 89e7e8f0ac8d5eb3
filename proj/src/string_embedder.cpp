#include "tartekit/embed/string_embedder.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "tartekit/error.hpp"

namespace tartekit {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

StringEmbedder::StringEmbedder(int dim, NgramOptions options) : dim_(dim), options_(options) {
  if (dim_ < 1) throw InvalidArgument("StringEmbedder: dimension must be positive");
  if (options_.min_n < 1 || options_.max_n < options_.min_n) throw InvalidArgument("StringEmbedder: bad n-gram range");
  if (options_.buckets == 0) throw InvalidArgument("StringEmbedder: bucket count must be positive");
}

void StringEmbedder::add_lookup(std::string token, RowVectorXd vector) {
  if (vector.size() != dim_) {
    throw DimensionError("lookup vector for '" + token + "' has " + std::to_string(vector.size()) +
                         " entries, expected " + std::to_string(dim_));
  }
  lookup_[std::move(token)] = std::move(vector);
}

void StringEmbedder::load_lookup(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file " + path.string());
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("#dim", 0) == 0) {
      const int declared = std::atoi(line.c_str() + 4);
      if (declared != dim_) {
        throw DimensionError(path.string() + ": file declares dim " + std::to_string(declared) +
                             ", embedder expects " + std::to_string(dim_));
      }
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path.string() + ":" + std::to_string(lineno) + ": missing TAB");
    std::istringstream values(line.substr(tab + 1));
    std::vector<double> v;
    double x = 0.0;
    while (values >> x) v.push_back(x);
    if (!values.eof()) throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad number");
    if (static_cast<int>(v.size()) != dim_) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim_) +
                       " values, found " + std::to_string(v.size()));
    }
    add_lookup(line.substr(0, tab), Eigen::Map<RowVectorXd>(v.data(), dim_));
  }
}

RowVectorXd StringEmbedder::hashed_ngram_vector(std::string_view s) const {
  const std::string wrapped = "<" + std::string(s) + ">";
  RowVectorXd acc = RowVectorXd::Zero(dim_);
  int count = 0;
  for (int n = options_.min_n; n <= options_.max_n; ++n) {
    if (static_cast<std::size_t>(n) > wrapped.size()) break;
    for (std::size_t i = 0; i + n <= wrapped.size(); ++i) {
      const std::uint64_t bucket = fnv1a64(std::string_view(wrapped).substr(i, n)) % options_.buckets;
      std::uint64_t state = options_.seed ^ (bucket * 0xd6e8feb86659fd93ULL);
      for (int k = 0; k < dim_; ++k) {
        // Uniform on [-1, 1) from the top 53 bits.
        const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
        acc(k) += 2.0 * u - 1.0;
      }
      ++count;
    }
  }
  if (count == 0) {
    // Shorter than min_n even with boundary markers: hash the whole string.
    std::uint64_t state = options_.seed ^ fnv1a64(wrapped);
    for (int k = 0; k < dim_; ++k) acc(k) = 2.0 * (static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53) - 1.0;
  }
  return acc / acc.norm();
}

StringEmbedding StringEmbedder::embed(std::string_view s) const {
  const std::string_view t = trim(s);
  if (t.empty()) return {RowVectorXd::Zero(dim_), true};
  if (auto it = lookup_.find(std::string(t)); it != lookup_.end()) return {it->second, false};
  return {hashed_ngram_vector(t), false};
}

}  // namespace tartekit
