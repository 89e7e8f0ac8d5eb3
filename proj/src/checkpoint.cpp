#include "tartekit/encoder/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <sstream>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "tartekit/error.hpp"

namespace tartekit {

using binary::put;
using binary::put_string;
using binary::Reader;

const NamedBlob* Checkpoint::find(const std::string& name) const {
  for (const auto& b : blobs) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

const NamedBlob& Checkpoint::at(const std::string& name) const {
  if (const auto* b = find(name)) return *b;
  throw ParseError("checkpoint has no blob named '" + name + "'");
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  const auto& c = ckpt.config;
  for (int v : {c.d_lm, c.d_model, c.layers, c.heads, c.d_ff, c.projection_hidden}) put<std::int32_t>(out, v);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.matryoshka_dims.size()));
  for (int dim : c.matryoshka_dims) put<std::int32_t>(out, dim);
  put<double>(out, c.dropout);
  put_string(out, ckpt.metadata);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.blobs.size()));
  for (const auto& b : ckpt.blobs) {
    put_string(out, b.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.data.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.data.cols()));
    for (Eigen::Index i = 0; i < b.data.size(); ++i) put<double>(out, b.data.data()[i]);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes, "checkpoint");
  r.need(sizeof kCheckpointMagic);
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw ParseError("not a TARTEKIT checkpoint (bad magic)");
  }
  for (std::size_t i = 0; i < sizeof kCheckpointMagic; ++i) r.get<char>();
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  auto& c = ckpt.config;
  c.d_lm = r.get<std::int32_t>();
  c.d_model = r.get<std::int32_t>();
  c.layers = r.get<std::int32_t>();
  c.heads = r.get<std::int32_t>();
  c.d_ff = r.get<std::int32_t>();
  c.projection_hidden = r.get<std::int32_t>();
  c.matryoshka_dims.resize(r.get<std::uint32_t>());
  for (auto& dim : c.matryoshka_dims) dim = r.get<std::int32_t>();
  c.dropout = r.get<double>();
  ckpt.metadata = r.get_string();
  const auto count = r.get<std::uint32_t>();
  ckpt.blobs.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedBlob b;
    b.name = r.get_string();
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    r.need(static_cast<std::size_t>(rows) * cols * sizeof(double));
    b.data.resize(rows, cols);
    for (Eigen::Index k = 0; k < b.data.size(); ++k) b.data.data()[k] = r.get<double>();
    ckpt.blobs.push_back(std::move(b));
  }
  if (!r.done()) throw ParseError("trailing bytes after checkpoint blobs");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  binary::write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(binary::read_file(path)); }

std::string bytes_digest(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

std::string file_digest(const std::filesystem::path& path) { return bytes_digest(binary::read_file(path)); }

void add_model_blobs(Checkpoint& ckpt, const EncoderModel& model, const std::string& prefix) {
  for (const auto* p : model.parameters()) ckpt.blobs.push_back({prefix + p->name, p->value});
}

EncoderModel model_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix) {
  EncoderModel model(ckpt.config, 0);
  for (auto* p : model.parameters()) {
    const NamedBlob& b = ckpt.at(prefix + p->name);
    if (b.data.rows() != p->value.rows() || b.data.cols() != p->value.cols()) {
      throw DimensionError("checkpoint blob '" + b.name + "' has the wrong shape for the configured model");
    }
    p->value = b.data;
  }
  return model;
}

Checkpoint make_encoder_checkpoint(const EncoderModel& model, const StringEmbedder& embedder,
                                   const std::string& kind) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  const auto& o = embedder.options();
  nlohmann::json meta = {{"kind", kind},
                         {"embedder", {{"dim", embedder.dim()},
                                       {"min_n", o.min_n},
                                       {"max_n", o.max_n},
                                       {"buckets", o.buckets},
                                       {"seed", o.seed}}}};
  ckpt.metadata = meta.dump();
  add_model_blobs(ckpt, model);
  return ckpt;
}

StringEmbedder embedder_from_checkpoint(const Checkpoint& ckpt) {
  const auto meta = nlohmann::json::parse(ckpt.metadata);
  if (!meta.contains("embedder")) return StringEmbedder(ckpt.config.d_lm);
  const auto& e = meta.at("embedder");
  NgramOptions o;
  o.min_n = e.at("min_n").get<int>();
  o.max_n = e.at("max_n").get<int>();
  o.buckets = e.at("buckets").get<std::uint64_t>();
  o.seed = e.at("seed").get<std::uint64_t>();
  return StringEmbedder(e.at("dim").get<int>(), o);
}

}  // namespace tartekit
