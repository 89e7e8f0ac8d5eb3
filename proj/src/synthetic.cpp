#include <algorithm>
#include <cmath>
#include <random>

#include "tartekit/kb/synthetic.hpp"

namespace tartekit {

namespace {

const std::vector<std::string> kGenres{"baroque", "gothic", "modernist", "rococo",
                                       "brutalist", "romanesque", "art deco", "neoclassical"};
const std::vector<std::string> kCities{"Paris", "London", "Berlin", "Madrid", "Rome",
                                       "Vienna", "Lisbon", "Prague", "Dublin", "Oslo"};
const std::vector<std::string> kLanguages{"English", "French", "German", "Spanish", "Italian"};

// Index into vocab: with probability `bias` from the cluster's own block,
// otherwise anywhere.
int biased_pick(int vocab, int cluster, int clusters, double bias, std::mt19937_64& rng) {
  std::bernoulli_distribution own(bias);
  if (own(rng)) {
    const int block = vocab / clusters;
    std::uniform_int_distribution<int> in(cluster * block, cluster * block + block - 1);
    return in(rng);
  }
  std::uniform_int_distribution<int> any(0, vocab - 1);
  return any(rng);
}

}  // namespace

SyntheticKb make_synthetic_kb(const SyntheticKbOptions& options) {
  if (options.entities < 1 || options.clusters < 1 || options.clusters > 4) {
    throw InvalidArgument("synthetic KB needs at least one entity and 1 to 4 clusters");
  }
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> coin(0, 1);
  SyntheticKb kb;
  for (int i = 0; i < options.entities; ++i) {
    const int c = i % options.clusters;
    const std::string name = "entity_" + std::to_string(i);
    kb.entity_names.push_back(name);
    kb.cluster.push_back(c);
    auto add = [&](const std::string& rel, Tail tail, TailKind kind) {
      kb.triples.push_back({name, rel, std::move(tail), kind});
    };

    const int genres = 2 + coin(rng);
    for (int g = 0; g < genres; ++g) {
      add("architectural style", kGenres[biased_pick(8, c, options.clusters, 0.8, rng)], TailKind::String);
    }
    const int cities = 1 + coin(rng);
    for (int k = 0; k < cities; ++k) {
      add("located in", kCities[biased_pick(10, c, options.clusters, 0.8, rng)], TailKind::String);
    }
    add("official language", kLanguages[std::uniform_int_distribution<int>(0, 4)(rng)], TailKind::String);
    add("population", std::round(std::exp(7.0 + 2.0 * c + normal(rng))), TailKind::Number);
    const int year = std::clamp(static_cast<int>(1850 + 80 * c + 25 * normal(rng)), 1000, 2100);
    const int month = std::uniform_int_distribution<int>(1, 12)(rng);
    const int day = std::uniform_int_distribution<int>(1, days_in_month(year, month))(rng);
    add("inception", DatetimeValue{year, month, day, std::nullopt}, TailKind::Datetime);
    add("elevation", 100.0 + 30.0 * normal(rng), TailKind::Number);
  }
  return kb;
}

}  // namespace tartekit
