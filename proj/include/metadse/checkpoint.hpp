#pragma once

#include <map>
#include <optional>
#include <string>

#include "metadse/arch_mask.hpp"
#include "metadse/episode.hpp"
#include "metadse/surrogate.hpp"

namespace metadse {

// Everything needed to rebuild a surrogate: architecture, target units,
// parameters and an optional mask. Doubles are stored as raw little-endian
// bits, so a save/load round trip is exact.
struct Checkpoint {
  PredictorConfig config;
  std::size_t params = 0;  // number of design parameters P
  TargetScaler scaler;
  ParamVector theta;
  std::optional<ArchMask> mask;
  std::map<std::string, std::string> metadata;  // seeds, config hash, ...

  Surrogate model() const { return Surrogate(config, params); }
  // Throws ShapeError if θ or the mask do not fit the architecture.
  void validate() const;
};

std::string serialize_checkpoint(const Checkpoint& c);
// Throws SchemaError on a malformed or mismatched file.
Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin);

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace metadse
