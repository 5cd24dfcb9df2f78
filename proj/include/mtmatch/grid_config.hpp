#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mtmatch/simulation.hpp"

namespace mtmatch {

struct GridSpec {
  std::vector<SimConfig> cells;
  // Combinations rejected by SimConfig::check (e.g. a non-PD covariance), with the reason.
  std::vector<std::string> skipped;
};

// Grammar is documented in docs/grid_format.md. `seed_override` replaces
// every base seed in the file.
GridSpec parse_grid(std::istream& in, std::optional<std::uint64_t> seed_override = std::nullopt);
GridSpec read_grid(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = std::nullopt);

// Cell seed derived from a base seed and every other field of the cell.
std::uint64_t cell_seed(const SimConfig& cfg, std::uint64_t base);

}  // namespace mtmatch
