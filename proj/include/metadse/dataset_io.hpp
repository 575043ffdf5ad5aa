#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "metadse/design_space.hpp"
#include "metadse/workload_oracle.hpp"

namespace metadse {

// CSV with header `workload,<param names...>,ipc,power`. Parameter columns
// hold candidate VALUES in table units (labels for categorical parameters).
WorkloadSource load_dataset(const std::string& path, const DesignSpace& space);
WorkloadSource parse_dataset(const std::string& text, const DesignSpace& space, const std::string& origin);

// Canonical form: rows sorted by design point, 17 significant digits.
// Metadata becomes leading '# key = value' lines, which the parser skips.
std::string format_dataset(const WorkloadSource& source, const std::map<std::string, std::string>& metadata = {});
void save_dataset(const WorkloadSource& source, const std::string& path,
                  const std::map<std::string, std::string>& metadata = {});

// Materializes n distinct labeled points of a synthetic source.
WorkloadSource materialize(const WorkloadSource& synthetic, std::size_t n, std::uint64_t seed);

// Everything needed to regenerate a synthetic family bit for bit.
struct FamilyManifest {
  std::uint64_t seed = 0;
  double dissimilarity = 0;
  double noise = 0;
  std::size_t samples_per_workload = 0;
  std::vector<WorkloadSurface> surfaces;
  std::map<std::string, std::string> metadata;  // config hash, seeds, ...
};

std::string format_manifest(const FamilyManifest& m);
FamilyManifest parse_manifest(const std::string& text, const std::string& origin);
FamilyManifest load_manifest(const std::string& path);
void save_manifest(const FamilyManifest& m, const std::string& path);

}  // namespace metadse
