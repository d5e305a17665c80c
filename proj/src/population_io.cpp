#include "mlbn/population_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "mlbn/error.hpp"

namespace mlbn {

namespace {

constexpr std::array<char, 4> kMagic{'M', 'L', 'B', 'N'};

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes;
  for (int i = 0; i < 8; ++i) bytes[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> bytes;
  for (int i = 0; i < 4; ++i) bytes[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) throw IoError("population file truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[static_cast<std::size_t>(i)];
  return v;
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) throw IoError("population file truncated");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | bytes[static_cast<std::size_t>(i)];
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

std::int32_t get_i32(std::istream& in) { return static_cast<std::int32_t>(get_u32(in)); }

}  // namespace

void write_population(std::ostream& out, const PopulationFile& file) {
  const ParticlePopulation& pop = file.population;
  pop.validate();
  const NetworkShape& shape = pop.particles.front().shape();
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kPopulationFormatVersion);
  put_u64(out, file.tag);
  put_u32(out, static_cast<std::uint32_t>(shape.depth()));
  put_u32(out, static_cast<std::uint32_t>(shape.input_dim()));
  put_u32(out, static_cast<std::uint32_t>(shape.output_dim()));
  put_u32(out, static_cast<std::uint32_t>(shape.level()));
  put_u64(out, pop.size());
  put_u64(out, file.attributes.size());
  for (double a : file.attributes) put_f64(out, a);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    put_f64(out, pop.log_lik[i]);
    put_f64(out, pop.log_weights[i]);
    put_u64(out, pop.ancestors[i]);
    for (double v : pop.particles[i].flatten()) put_f64(out, v);
  }
  if (!out) throw IoError("failed writing population");
}

PopulationFile read_population(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw IoError("not a population file (bad magic)");
  const std::uint32_t version = get_u32(in);
  if (version != kPopulationFormatVersion) {
    throw IoError("unsupported population format version " + std::to_string(version));
  }
  PopulationFile file;
  file.tag = get_u64(in);
  const int depth = get_i32(in);
  const int input_dim = get_i32(in);
  const int output_dim = get_i32(in);
  const int level = get_i32(in);
  NetworkShape shape = [&] {
    try {
      return NetworkShape(depth, input_dim, output_dim, level);
    } catch (const std::exception& e) {
      throw IoError(std::string("population file has an invalid shape: ") + e.what());
    }
  }();
  const std::uint64_t count = get_u64(in);
  const std::uint64_t attribute_count = get_u64(in);
  if (attribute_count > (1u << 20)) throw IoError("population file attribute count is implausible");
  for (std::uint64_t a = 0; a < attribute_count; ++a) file.attributes.push_back(get_f64(in));

  const std::size_t params = param_count(shape);
  std::vector<double> buffer(params);
  ParticlePopulation& pop = file.population;
  for (std::uint64_t i = 0; i < count; ++i) {
    pop.log_lik.push_back(get_f64(in));
    pop.log_weights.push_back(get_f64(in));
    pop.ancestors.push_back(get_u64(in));
    for (double& v : buffer) v = get_f64(in);
    pop.particles.push_back(ThetaLevel::unflatten(shape, buffer.data(), buffer.size()));
  }
  if (count == 0) throw IoError("population file holds no particles");
  return file;
}

void save_population(const std::filesystem::path& path, const PopulationFile& file) {
  // Write to a sibling temporary, then rename, so a crash never leaves a
  // half-written checkpoint under the final name.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    write_population(out, file);
    out.flush();
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

PopulationFile load_population(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return read_population(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace mlbn
