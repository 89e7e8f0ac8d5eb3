#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>

#include "tartekit/numerics/tensor.hpp"

namespace tartekit {

struct NgramOptions {
  int min_n = 3;
  int max_n = 6;
  std::uint64_t buckets = 2000000;
  std::uint64_t seed = 0x7a47e5eedULL;
};

struct StringEmbedding {
  RowVectorXd vector;
  bool missing = false;
};

// Maps strings to d_lm-dimensional vectors. Strings present in the lookup
// table come back verbatim; all others go through a hashed character n-gram
// model: the string is wrapped as "<s>", every n-gram with min_n <= n <= max_n
// is hashed into a bucket, each bucket owns a fixed pseudo-random vector,
// and the bucket vectors are averaged and L2-normalized.
class StringEmbedder {
 public:
  explicit StringEmbedder(int dim = 300, NgramOptions options = {});

  // Reads `token<TAB>v1 v2 ...` records; an optional first line `#dim <d>`
  // declares the width. Every vector must have the embedder's width.
  void load_lookup(const std::filesystem::path& path);
  void add_lookup(std::string token, RowVectorXd vector);

  StringEmbedding embed(std::string_view s) const;

  // Fallback path only; exposed for tests.
  RowVectorXd hashed_ngram_vector(std::string_view s) const;

  int dim() const { return dim_; }
  const NgramOptions& options() const { return options_; }
  std::size_t lookup_size() const { return lookup_.size(); }

 private:
  int dim_;
  NgramOptions options_;
  std::unordered_map<std::string, RowVectorXd> lookup_;
};

// Convenience wrapper around StringEmbedder::embed.
inline StringEmbedding embed_string(const StringEmbedder& e, std::string_view s) { return e.embed(s); }

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace tartekit
