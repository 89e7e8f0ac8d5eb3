#pragma once

#include <cstdint>
#include <vector>

#include "tartekit/kb/store.hpp"

namespace tartekit {

// Toy knowledge base with latent clusters. Both clusters draw strings from
// one shared vocabulary with cluster-dependent frequencies, and numbers and
// dates from cluster-dependent distributions; two relations are pure noise.
struct SyntheticKbOptions {
  int entities = 200;
  int clusters = 2;
  std::uint64_t seed = 0;
};

struct SyntheticKb {
  std::vector<Triple> triples;
  std::vector<std::string> entity_names;
  std::vector<int> cluster;  // latent cluster of entity_names[i]
};

SyntheticKb make_synthetic_kb(const SyntheticKbOptions& options);

}  // namespace tartekit
