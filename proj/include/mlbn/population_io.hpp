#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "mlbn/smc.hpp"

namespace mlbn {

/// Binary population container.
///
/// Layout (all integers and floats little-endian):
///   "MLBN"  u32 version  u64 tag
///   i32 depth  i32 input_dim  i32 output_dim  i32 level
///   u64 particle_count  u64 attribute_count  f64 attributes[attribute_count]
///   per particle: f64 log_lik  f64 log_weight  u64 ancestor  f64 params[param_count]
/// Parameters follow ThetaLevel::flatten order.
struct PopulationFile {
  ParticlePopulation population;
  std::uint64_t tag = 0;
  std::vector<double> attributes;
};

inline constexpr std::uint32_t kPopulationFormatVersion = 1;

void write_population(std::ostream& out, const PopulationFile& file);
PopulationFile read_population(std::istream& in);

void save_population(const std::filesystem::path& path, const PopulationFile& file);
PopulationFile load_population(const std::filesystem::path& path);

}  // namespace mlbn
