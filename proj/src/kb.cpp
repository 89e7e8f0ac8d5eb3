#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "tartekit/kb/store.hpp"

namespace tartekit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

double tail_number(const Tail& t) {
  if (const auto* d = std::get_if<double>(&t)) return *d;
  return datetime_to_fractional_year(std::get<DatetimeValue>(t));
}

std::string tail_text(const Tail& t) {
  if (const auto* s = std::get_if<std::string>(&t)) return *s;
  if (const auto* d = std::get_if<double>(&t)) {
    std::ostringstream os;
    os.precision(17);
    os << *d;
    return os.str();
  }
  return to_iso_string(std::get<DatetimeValue>(t));
}

}  // namespace

std::string to_string(TailKind kind) {
  switch (kind) {
    case TailKind::String: return "str";
    case TailKind::Number: return "num";
    case TailKind::Datetime: return "dt";
  }
  return "?";
}

TailKind tail_kind_from_string(const std::string& s) {
  if (s == "str") return TailKind::String;
  if (s == "num") return TailKind::Number;
  if (s == "dt") return TailKind::Datetime;
  throw ParseError("unknown tail kind '" + s + "' (expected str, num or dt)");
}

KnowledgeStore::KnowledgeStore(const std::vector<Triple>& triples) {
  // Hash lookups for pool membership; Tail has no hash, so key by text.
  std::vector<std::unordered_map<std::string, int>> pool_index;
  for (const Triple& t : triples) {
    if (t.head.empty() || t.relation.empty()) throw InvalidArgument("triple with empty head or relation");
    if (const auto* s = std::get_if<std::string>(&t.tail); s && trim(*s).empty()) {
      throw InvalidArgument("triple (" + t.head + ", " + t.relation + ") has an empty tail");
    }
    auto [eit, new_entity] = entity_index_.try_emplace(t.head, static_cast<int>(entities_.size()));
    if (new_entity) {
      entities_.push_back(t.head);
      facts_.emplace_back();
    }
    auto [rit, new_relation] = relation_index_.try_emplace(t.relation, static_cast<int>(relations_.size()));
    if (new_relation) {
      relations_.push_back(Relation{t.relation, t.kind, {}, std::nullopt, 0});
      pool_index.emplace_back();
    }
    Relation& rel = relations_[rit->second];
    if (rel.kind != t.kind) {
      throw InvalidArgument("relation '" + t.relation + "' mixes tail kinds " + to_string(rel.kind) + " and " +
                            to_string(t.kind));
    }
    auto& index = pool_index[rit->second];
    auto [vit, new_value] = index.try_emplace(tail_text(t.tail), static_cast<int>(rel.pool.size()));
    if (new_value) rel.pool.push_back(t.tail);
    ++rel.fact_count;
    facts_[eit->second].push_back(Fact{rit->second, vit->second});
    ++fact_count_;
  }

  // Per-relation transforms over every observed value, duplicates included.
  std::vector<std::vector<double>> values(relations_.size());
  for (const auto& entity_facts : facts_) {
    for (const Fact& f : entity_facts) {
      if (relations_[f.relation].kind != TailKind::String) values[f.relation].push_back(tail_number(tail(f)));
    }
  }
  for (std::size_t r = 0; r < relations_.size(); ++r) {
    Relation& rel = relations_[r];
    if (rel.kind == TailKind::String) continue;
    if (rel.pool.size() < 2) {
      warn("relation '" + rel.name + "' has a single distinct value; using the identity transform");
      rel.transform = PowerTransform::identity(rel.name);
      continue;
    }
    rel.transform = fit_power_transform(values[r], rel.name);
  }
}

KbStatistics KnowledgeStore::statistics() const { return {entity_count(), relation_count(), fact_count_}; }

std::optional<int> KnowledgeStore::find_entity(const std::string& name) const {
  auto it = entity_index_.find(name);
  if (it == entity_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> KnowledgeStore::find_relation(const std::string& name) const {
  auto it = relation_index_.find(name);
  if (it == relation_index_.end()) return std::nullopt;
  return it->second;
}

std::vector<Triple> parse_triples(std::istream& in, const std::string& source) {
  std::vector<Triple> out;
  std::map<std::string, std::map<TailKind, long>> kinds;  // relation -> kind -> first line
  std::string line;
  long lineno = 0;
  auto fail = [&](const std::string& msg) { throw ParseError(source + ":" + std::to_string(lineno) + ": " + msg); };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line).front() == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 4) fail("expected 4 tab-separated fields, got " + std::to_string(fields.size()));
    Triple t;
    t.head = trim(fields[0]);
    t.relation = trim(fields[1]);
    const std::string tail = trim(fields[2]);
    if (t.head.empty()) fail("empty head");
    if (t.relation.empty()) fail("empty relation");
    if (tail.empty()) fail("empty tail");
    try {
      t.kind = tail_kind_from_string(trim(fields[3]));
    } catch (const ParseError& e) {
      fail(e.what());
    }
    switch (t.kind) {
      case TailKind::String:
        t.tail = tail;
        break;
      case TailKind::Number: {
        char* end = nullptr;
        const double v = std::strtod(tail.c_str(), &end);
        if (end != tail.c_str() + tail.size() || !std::isfinite(v)) fail("'" + tail + "' is not a finite number");
        t.tail = v;
        break;
      }
      case TailKind::Datetime: {
        auto d = try_parse_iso_datetime(tail);
        if (!d) fail("'" + tail + "' is not an ISO-8601 date");
        t.tail = *d;
        break;
      }
    }
    kinds[t.relation].try_emplace(t.kind, lineno);
    out.push_back(std::move(t));
  }
  std::string offenders;
  for (const auto& [rel, ks] : kinds) {
    if (ks.size() < 2) continue;
    offenders += "\n  relation '" + rel + "':";
    for (const auto& [k, first] : ks) offenders += " " + to_string(k) + " (line " + std::to_string(first) + ")";
  }
  if (!offenders.empty()) throw ParseError(source + ": relations with mixed tail kinds:" + offenders);
  return out;
}

KnowledgeStore load_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return KnowledgeStore(parse_triples(in, path.string()));
}

void write_triples(std::ostream& out, const std::vector<Triple>& triples) {
  for (const Triple& t : triples) {
    out << t.head << '\t' << t.relation << '\t' << tail_text(t.tail) << '\t' << to_string(t.kind) << '\n';
  }
}

FactEncoder::FactEncoder(const KnowledgeStore& store, const StringEmbedder& embedder) {
  for (int r = 0; r < store.relation_count(); ++r) {
    const Relation& rel = store.relation(r);
    const ColumnKind kind = rel.kind == TailKind::String   ? ColumnKind::CategoricalString
                            : rel.kind == TailKind::Number ? ColumnKind::Numerical
                                                           : ColumnKind::Datetime;
    columns_.push_back(make_column_spec(rel.name, kind, embedder, rel.transform));
    std::vector<CellPair> pairs;
    pairs.reserve(rel.pool.size());
    for (const Tail& t : rel.pool) {
      Cell cell = std::visit([](const auto& v) -> Cell { return v; }, t);
      auto p = build_cell_pair(columns_.back(), cell, embedder);
      if (!p) throw InvalidArgument("relation '" + rel.name + "' has a tail that embeds as missing");
      pairs.push_back(std::move(*p));
    }
    pairs_.push_back(std::move(pairs));
  }
}

CellPairSequence FactEncoder::row(const std::vector<Fact>& facts) const {
  CellPairSequence seq;
  seq.pairs.reserve(facts.size());
  for (const Fact& f : facts) seq.pairs.push_back(pair(f));
  return seq;
}

std::string serialize(const PretrainBatch& batch) {
  std::ostringstream os;
  for (std::size_t i = 0; i < batch.rows.size(); ++i) {
    if (i % 2 == 0) os << "e" << batch.entities.at(i / 2) << ':';
    for (const Fact& f : batch.rows[i]) os << f.relation << ',' << f.value << ';';
    os << '\n';
  }
  for (const auto& [a, p] : batch.positive_map) os << a << "->" << p << ' ';
  return os.str();
}

BatchSampler::BatchSampler(const KnowledgeStore& store, SamplerOptions options)
    : store_(&store), options_(options) {
  if (options_.facts_per_row < 1) throw InvalidArgument("facts per row must be at least 1");
  if (options_.max_duplicates < 1) throw InvalidArgument("max duplicates must be at least 1");
  if (options_.two_replacements < 0.0 || options_.two_replacements > 1.0) {
    throw InvalidArgument("two-replacement probability must be in [0, 1]");
  }
  for (int e = 0; e < store.entity_count(); ++e) {
    std::map<int, int> per_relation;
    for (const Fact& f : store.facts(e)) ++per_relation[f.relation];
    long usable = 0;
    for (const auto& [r, c] : per_relation) usable += std::min(c, options_.max_duplicates);
    if (usable >= options_.facts_per_row) pool_.push_back(e);
  }
}

std::vector<Fact> BatchSampler::select_facts(int entity, std::mt19937_64& rng) const {
  std::vector<Fact> facts = store_->facts(entity);
  std::shuffle(facts.begin(), facts.end(), rng);
  // Group by relation in shuffled order, then take one fact per relation per
  // round so every relation is used once before any is used twice.
  std::vector<std::vector<Fact>> groups;
  std::map<int, std::size_t> group_of;
  for (const Fact& f : facts) {
    auto [it, fresh] = group_of.try_emplace(f.relation, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(f);
  }
  std::vector<Fact> out;
  const auto want = static_cast<std::size_t>(options_.facts_per_row);
  for (int round = 0; round < options_.max_duplicates && out.size() < want; ++round) {
    for (const auto& g : groups) {
      if (out.size() == want) break;
      if (static_cast<int>(g.size()) > round) out.push_back(g[round]);
    }
  }
  if (out.size() < want) {
    throw InvalidArgument("entity '" + store_->entity(entity) + "' lacks enough facts after capping duplicates");
  }
  return out;
}

PretrainBatch BatchSampler::sample(int entities_per_batch, std::mt19937_64& rng) const {
  if (entities_per_batch < 1) throw InvalidArgument("batch needs at least one entity");
  if (static_cast<std::size_t>(entities_per_batch) > pool_.size()) {
    throw InvalidArgument("only " + std::to_string(pool_.size()) + " entities have " +
                          std::to_string(options_.facts_per_row) + " usable facts but " +
                          std::to_string(entities_per_batch) +
                          " were requested; lower the entities per batch or the facts per row");
  }
  // Partial Fisher-Yates: the first N_b slots form a uniform sample.
  std::vector<int> candidates = pool_;
  PretrainBatch batch;
  for (int i = 0; i < entities_per_batch; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
    const int e = candidates[i];
    batch.entities.push_back(e);
    auto anchor = select_facts(e, rng);
    auto positive = make_positive(anchor, *store_, rng, options_.two_replacements);
    batch.positive_map.emplace_back(2 * i, 2 * i + 1);
    batch.rows.push_back(std::move(anchor));
    batch.rows.push_back(std::move(positive));
  }
  return batch;
}

PretrainBatch sample_batch(const KnowledgeStore& store, int entities_per_batch, int facts_per_row,
                           int max_duplicates, std::mt19937_64& rng) {
  return BatchSampler(store, {facts_per_row, max_duplicates, 0.5}).sample(entities_per_batch, rng);
}

std::vector<Fact> make_positive(const std::vector<Fact>& anchor, const KnowledgeStore& store, std::mt19937_64& rng,
                                double two_replacements) {
  if (anchor.empty()) throw InvalidArgument("make_positive: anchor has no facts");
  std::vector<std::size_t> replaceable;
  for (std::size_t i = 0; i < anchor.size(); ++i) {
    if (store.relation(anchor[i].relation).pool.size() >= 2) replaceable.push_back(i);
  }
  std::vector<Fact> positive = anchor;
  if (replaceable.empty()) {
    warn("make_positive: no fact has an alternative value; positive duplicates the anchor");
    return positive;
  }
  std::bernoulli_distribution two(two_replacements);
  const std::size_t count = std::min<std::size_t>(two(rng) ? 2 : 1, replaceable.size());
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, replaceable.size() - 1);
    std::swap(replaceable[k], replaceable[pick(rng)]);
    Fact& f = positive[replaceable[k]];
    const int pool = static_cast<int>(store.relation(f.relation).pool.size());
    // Uniform over the pool minus the anchor's own value.
    std::uniform_int_distribution<int> draw(0, pool - 2);
    const int v = draw(rng);
    f.value = v >= f.value ? v + 1 : v;
  }
  return positive;
}

}  // namespace tartekit
