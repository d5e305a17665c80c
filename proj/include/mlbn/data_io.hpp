#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "mlbn/models.hpp"

namespace mlbn {

// Datasets as CSV, one row per item, floats in shortest round-trip form.
//
//   regression:      x1..xn, y1..ym, noise_var1..noise_varm
//   classification:  x1..xn, label            (1-based)
//   trajectory:      s1..sd, action, sigma    (1-based action)
//   transition:      action, row, c1..cd, offset
//
// Columns repeated on every row (noise_var, sigma) must be constant.

/// Shortest decimal that parses back to exactly `v`.
std::string format_double(double v);
double parse_double(std::string_view text);

void write_regression_csv(std::ostream& out, const RegressionData& data);
RegressionData read_regression_csv(std::istream& in);

void write_classification_csv(std::ostream& out, const ClassificationData& data);
/// `num_classes` = 0 takes the largest label.
ClassificationData read_classification_csv(std::istream& in, int num_classes = 0);

void write_trajectory_csv(std::ostream& out, const RlTrajectory& traj);
void write_transition_csv(std::ostream& out, const AffineTransition& transition);
RlTrajectory read_trajectory_csv(std::istream& traj_in, std::istream& transition_in);

/// Writes `text` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view text);
std::string read_file(const std::filesystem::path& path);

}  // namespace mlbn
