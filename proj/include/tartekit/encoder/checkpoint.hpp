#pragma once

// Binary model container.
//
// Layout (all integers little-endian, floats IEEE-754 binary64 LE):
//   8 bytes   magic "TARTEKIT"
//   u32       format version
//   i32 x 6   d_lm, d_model, layers, heads, d_ff, projection_hidden
//   u32       number of projection dims, then i32 per dim
//   f64       dropout
//   u32 + N   metadata text (JSON)
//   u32       blob count, then per blob:
//               u32 + N name, u32 rows, u32 cols, rows*cols f64 (row-major)

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tartekit/embed/string_embedder.hpp"
#include "tartekit/encoder/model.hpp"

namespace tartekit {

inline constexpr char kCheckpointMagic[8] = {'T', 'A', 'R', 'T', 'E', 'K', 'I', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedBlob {
  std::string name;
  MatrixXd data;
};

struct Checkpoint {
  EncoderConfig config;
  std::string metadata = "{}";
  std::vector<NamedBlob> blobs;

  const NamedBlob* find(const std::string& name) const;
  const NamedBlob& at(const std::string& name) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// 16 hex digits of FNV-1a over the file bytes.
std::string file_digest(const std::filesystem::path& path);
std::string bytes_digest(const std::string& bytes);

// Appends every model parameter as a blob named prefix + parameter name.
void add_model_blobs(Checkpoint& ckpt, const EncoderModel& model, const std::string& prefix = "");

// Rebuilds a model of ckpt.config from blobs carrying `prefix`.
EncoderModel model_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix = "");

// Encoder checkpoint with the embedder options recorded in the metadata.
Checkpoint make_encoder_checkpoint(const EncoderModel& model, const StringEmbedder& embedder,
                                   const std::string& kind = "encoder");

// Embedder described by a checkpoint's metadata (lookup tables are not
// stored; load them separately).
StringEmbedder embedder_from_checkpoint(const Checkpoint& ckpt);

}  // namespace tartekit
