#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "mlbn/error.hpp"
#include "mlbn/population_io.hpp"
#include "mlbn/prior.hpp"

using namespace mlbn;

namespace {

PopulationFile make_file() {
  const TnnPrior prior(1.5, NetworkShape(3, 2, 2, 2));
  RngStream rng(1, 0);
  PopulationFile file;
  file.tag = 0x0123456789abcdefULL;
  file.attributes = {0.25, 3.0, std::numeric_limits<double>::quiet_NaN()};
  for (std::size_t i = 0; i < 5; ++i) {
    file.population.particles.push_back(sample(prior, rng));
    file.population.log_lik.push_back(-static_cast<double>(i) * 1.5);
    file.population.log_weights.push_back(i == 3 ? -std::numeric_limits<double>::infinity() : 0.1 * i);
    file.population.ancestors.push_back(4 - i);
  }
  return file;
}

}  // namespace

TEST_CASE("population round trip") {
  const PopulationFile file = make_file();
  std::stringstream buf;
  write_population(buf, file);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "MLBN");
  CHECK(bytes[4] == 1);  // version, little-endian
  CHECK(bytes[8] == static_cast<char>(0xef));  // first tag byte
  const std::size_t params = param_count(NetworkShape(3, 2, 2, 2));
  CHECK(bytes.size() == 4 + 4 + 8 + 16 + 8 + 8 + 3 * 8 + 5 * (24 + 8 * params));

  const PopulationFile back = read_population(buf);
  CHECK(back.tag == file.tag);
  REQUIRE(back.attributes.size() == 3);
  CHECK(back.attributes[0] == 0.25);
  CHECK(std::isnan(back.attributes[2]));
  CHECK(back.population.log_lik == file.population.log_lik);
  CHECK(back.population.log_weights == file.population.log_weights);
  CHECK(back.population.ancestors == file.population.ancestors);
  for (std::size_t i = 0; i < 5; ++i) CHECK(back.population.particles[i] == file.population.particles[i]);
}

TEST_CASE("corrupt population files") {
  std::stringstream buf;
  write_population(buf, make_file());
  const std::string bytes = buf.str();

  std::stringstream bad_magic("MLBX" + bytes.substr(4));
  CHECK_THROWS_AS(read_population(bad_magic), IoError);

  std::string wrong_version = bytes;
  wrong_version[4] = 2;
  std::stringstream v(wrong_version);
  CHECK_THROWS_AS(read_population(v), IoError);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_population(truncated), IoError);
}

TEST_CASE("population files on disk") {
  const auto dir = std::filesystem::temp_directory_path() / "mlbn_test_io";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const PopulationFile file = make_file();
  save_population(dir / "p.mlbn", file);
  const PopulationFile back = load_population(dir / "p.mlbn");
  CHECK(back.population.particles.back() == file.population.particles.back());
  CHECK_THROWS_AS(load_population(dir / "missing.mlbn"), IoError);
  std::filesystem::remove_all(dir);
}
