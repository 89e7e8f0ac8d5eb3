#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "tartekit/embed/datetime.hpp"
#include "tartekit/embed/power_transform.hpp"
#include "tartekit/encoder/model.hpp"

namespace tartekit {

enum class TailKind { String, Number, Datetime };

std::string to_string(TailKind kind);  // "str", "num", "dt"
TailKind tail_kind_from_string(const std::string& s);

using Tail = std::variant<std::string, double, DatetimeValue>;

struct Triple {
  std::string head;
  std::string relation;
  Tail tail;
  TailKind kind = TailKind::String;
};

// A fact of one entity: indices into the relation table and into that
// relation's pool of distinct tails.
struct Fact {
  int relation = 0;
  int value = 0;

  bool operator==(const Fact&) const = default;
};

struct Relation {
  std::string name;
  TailKind kind = TailKind::String;
  std::vector<Tail> pool;  // distinct tails, first-seen order
  std::optional<PowerTransform> transform;
  long fact_count = 0;
};

struct KbStatistics {
  long entities = 0;
  long relations = 0;
  long facts = 0;
};

// Immutable after construction.
class KnowledgeStore {
 public:
  KnowledgeStore() = default;
  explicit KnowledgeStore(const std::vector<Triple>& triples);

  KbStatistics statistics() const;
  long entity_count() const { return static_cast<long>(entities_.size()); }
  long relation_count() const { return static_cast<long>(relations_.size()); }
  long fact_count() const { return fact_count_; }

  const std::string& entity(int i) const { return entities_.at(i); }
  const std::vector<Fact>& facts(int entity) const { return facts_.at(entity); }
  const Relation& relation(int r) const { return relations_.at(r); }
  std::optional<int> find_entity(const std::string& name) const;
  std::optional<int> find_relation(const std::string& name) const;

  const Tail& tail(const Fact& f) const { return relations_.at(f.relation).pool.at(f.value); }

 private:
  std::vector<std::string> entities_;
  std::unordered_map<std::string, int> entity_index_;
  std::vector<std::vector<Fact>> facts_;
  std::vector<Relation> relations_;
  std::unordered_map<std::string, int> relation_index_;
  long fact_count_ = 0;
};

// Parses the tab separated `head relation tail kind` format. Errors carry
// "source:line:". A relation seen with more than one kind is rejected with
// the list of offending relations.
std::vector<Triple> parse_triples(std::istream& in, const std::string& source = "<stream>");
KnowledgeStore load_triples(const std::filesystem::path& path);
void write_triples(std::ostream& out, const std::vector<Triple>& triples);

// Relation names and tails mapped to (E, X) pairs. Every vector is computed
// once up front.
class FactEncoder {
 public:
  FactEncoder(const KnowledgeStore& store, const StringEmbedder& embedder);

  const CellPair& pair(const Fact& f) const { return pairs_.at(f.relation).at(f.value); }
  CellPairSequence row(const std::vector<Fact>& facts) const;
  const ColumnSpec& column(int relation) const { return columns_.at(relation); }

 private:
  std::vector<ColumnSpec> columns_;
  std::vector<std::vector<CellPair>> pairs_;
};

struct PretrainBatch {
  std::vector<int> entities;             // one per anchor
  std::vector<std::vector<Fact>> rows;   // anchor at 2i, its positive at 2i+1
  std::vector<std::pair<int, int>> positive_map;

  bool operator==(const PretrainBatch&) const = default;
};

// Stable byte form, used to compare batches across runs.
std::string serialize(const PretrainBatch& batch);

struct SamplerOptions {
  int facts_per_row = 8;      // F
  int max_duplicates = 2;     // per relation within one row
  double two_replacements = 0.5;  // probability of changing two facts instead of one
};

class BatchSampler {
 public:
  BatchSampler(const KnowledgeStore& store, SamplerOptions options);

  // Entities that have at least F facts once each relation is capped at
  // max_duplicates.
  const std::vector<int>& pool() const { return pool_; }
  const SamplerOptions& options() const { return options_; }

  PretrainBatch sample(int entities_per_batch, std::mt19937_64& rng) const;

  // F facts of one entity, spread over as many relations as possible.
  std::vector<Fact> select_facts(int entity, std::mt19937_64& rng) const;

 private:
  const KnowledgeStore* store_;
  SamplerOptions options_;
  std::vector<int> pool_;
};

PretrainBatch sample_batch(const KnowledgeStore& store, int entities_per_batch, int facts_per_row,
                           int max_duplicates, std::mt19937_64& rng);

// Replaces the tail of one or two facts with another value of the same
// relation. Relations whose pool holds a single value are never touched;
// when nothing can change the anchor is copied and a warning is emitted.
std::vector<Fact> make_positive(const std::vector<Fact>& anchor, const KnowledgeStore& store, std::mt19937_64& rng,
                                double two_replacements = 0.5);

}  // namespace tartekit
