#pragma once

// Versioned binary model files; the byte layout is described in
// docs/checkpoint_format.md.

#include <iosfwd>
#include <string>

#include "ictp/model.hpp"

namespace ictp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

void write_checkpoint(std::ostream& os, const Model& model, const ModelParams& params);
void save_checkpoint(const std::string& path, const Model& model, const ModelParams& params);
/// Throws DataError for foreign, truncated or inconsistent files.
Checkpoint read_checkpoint(std::istream& is);
Checkpoint load_checkpoint(const std::string& path);

/// Model settings as JSON text (also embedded in checkpoints).
std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& text);

}  // namespace ictp
