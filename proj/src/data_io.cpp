#include "mlbn/data_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <vector>

#include "mlbn/error.hpp"

namespace mlbn {

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  // Number of leading header names of the form <prefix><k>.
  int count_prefix(std::string_view prefix, std::size_t from) const {
    int k = 0;
    while (from + static_cast<std::size_t>(k) < header.size() &&
           header[from + static_cast<std::size_t>(k)] == std::string(prefix) + std::to_string(k + 1)) {
      ++k;
    }
    return k;
  }
};

Table read_table(std::istream& in) {
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw IoError("CSV input is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  for (auto f : split(line)) t.header.emplace_back(f);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != t.header.size()) {
      throw IoError("CSV line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) + " fields, expected " +
                    std::to_string(t.header.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (auto f : fields) {
      try {
        row.push_back(parse_double(f));
      } catch (const IoError& e) {
        throw IoError("CSV line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

void numbered(std::vector<std::string>& names, const std::string& prefix, int count) {
  for (int k = 1; k <= count; ++k) names.push_back(prefix + std::to_string(k));
}

void write_header(std::ostream& out, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) out << names[i] << (i + 1 < names.size() ? ',' : '\n');
}

int as_int(double v, const char* what) {
  if (v != static_cast<double>(static_cast<int>(v))) throw IoError(std::string(what) + " must be an integer");
  return static_cast<int>(v);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

double parse_double(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw IoError("cannot parse '" + std::string(text) + "' as a number");
  }
  return v;
}

void write_regression_csv(std::ostream& out, const RegressionData& data) {
  data.validate();
  const auto n = static_cast<int>(data.inputs.rows());
  const auto m = static_cast<int>(data.outputs.rows());
  std::vector<std::string> names;
  numbered(names, "x", n);
  numbered(names, "y", m);
  numbered(names, "noise_var", m);
  write_header(out, names);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (int j = 0; j < n; ++j) out << format_double(data.inputs(j, i)) << ',';
    for (int k = 0; k < m; ++k) out << format_double(data.outputs(k, i)) << ',';
    for (int k = 0; k < m; ++k) out << format_double(data.noise_var[k]) << (k + 1 < m ? ',' : '\n');
  }
}

RegressionData read_regression_csv(std::istream& in) {
  const Table t = read_table(in);
  const int n = t.count_prefix("x", 0);
  const int m = t.count_prefix("y", static_cast<std::size_t>(n));
  if (n < 1 || m < 1 || t.count_prefix("noise_var", static_cast<std::size_t>(n + m)) != m ||
      t.header.size() != static_cast<std::size_t>(n + 2 * m)) {
    throw IoError("regression CSV header must be x1..xn,y1..ym,noise_var1..noise_varm");
  }
  RegressionData d;
  const auto count = static_cast<Eigen::Index>(t.rows.size());
  d.inputs.resize(n, count);
  d.outputs.resize(m, count);
  d.noise_var.resize(m);
  for (Eigen::Index i = 0; i < count; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    for (int j = 0; j < n; ++j) d.inputs(j, i) = row[static_cast<std::size_t>(j)];
    for (int k = 0; k < m; ++k) {
      d.outputs(k, i) = row[static_cast<std::size_t>(n + k)];
      const double var = row[static_cast<std::size_t>(n + m + k)];
      if (i == 0) {
        d.noise_var[k] = var;
      } else if (var != d.noise_var[k]) {
        throw IoError("noise_var column " + std::to_string(k + 1) + " is not constant");
      }
    }
  }
  d.validate();
  return d;
}

void write_classification_csv(std::ostream& out, const ClassificationData& data) {
  data.validate();
  const auto n = static_cast<int>(data.inputs.rows());
  std::vector<std::string> names;
  numbered(names, "x", n);
  names.emplace_back("label");
  write_header(out, names);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (int j = 0; j < n; ++j) out << format_double(data.inputs(j, i)) << ',';
    out << data.labels[static_cast<std::size_t>(i)] << '\n';
  }
}

ClassificationData read_classification_csv(std::istream& in, int num_classes) {
  const Table t = read_table(in);
  const int n = t.count_prefix("x", 0);
  if (n < 1 || t.header.size() != static_cast<std::size_t>(n + 1) || t.header.back() != "label") {
    throw IoError("classification CSV header must be x1..xn,label");
  }
  ClassificationData d;
  d.inputs.resize(n, static_cast<Eigen::Index>(t.rows.size()));
  int largest = 0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (int j = 0; j < n; ++j) d.inputs(j, static_cast<Eigen::Index>(i)) = t.rows[i][static_cast<std::size_t>(j)];
    d.labels.push_back(as_int(t.rows[i].back(), "label"));
    largest = std::max(largest, d.labels.back());
  }
  d.num_classes = num_classes > 0 ? num_classes : largest;
  d.validate();
  return d;
}

void write_trajectory_csv(std::ostream& out, const RlTrajectory& traj) {
  traj.validate();
  const auto d = static_cast<int>(traj.states.rows());
  std::vector<std::string> names;
  numbered(names, "s", d);
  names.emplace_back("action");
  names.emplace_back("sigma");
  write_header(out, names);
  for (Eigen::Index t = 0; t < traj.size(); ++t) {
    for (int j = 0; j < d; ++j) out << format_double(traj.states(j, t)) << ',';
    out << traj.actions[static_cast<std::size_t>(t)] << ',' << format_double(traj.sigma) << '\n';
  }
}

void write_transition_csv(std::ostream& out, const AffineTransition& transition) {
  const int d = transition.state_dim();
  std::vector<std::string> names = {"action", "row"};
  numbered(names, "c", d);
  names.emplace_back("offset");
  write_header(out, names);
  for (int a = 0; a < transition.num_actions(); ++a) {
    const auto& map = transition.maps[static_cast<std::size_t>(a)];
    const auto& offset = transition.offsets[static_cast<std::size_t>(a)];
    for (int r = 0; r < d; ++r) {
      out << a + 1 << ',' << r + 1;
      for (int c = 0; c < d; ++c) out << ',' << format_double(map(r, c));
      out << ',' << format_double(offset[r]) << '\n';
    }
  }
}

RlTrajectory read_trajectory_csv(std::istream& traj_in, std::istream& transition_in) {
  const Table t = read_table(traj_in);
  const int d = t.count_prefix("s", 0);
  if (d < 1 || t.header.size() != static_cast<std::size_t>(d + 2) || t.header[static_cast<std::size_t>(d)] != "action" ||
      t.header.back() != "sigma") {
    throw IoError("trajectory CSV header must be s1..sd,action,sigma");
  }
  RlTrajectory traj;
  traj.states.resize(d, static_cast<Eigen::Index>(t.rows.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (int j = 0; j < d; ++j) traj.states(j, static_cast<Eigen::Index>(i)) = t.rows[i][static_cast<std::size_t>(j)];
    traj.actions.push_back(as_int(t.rows[i][static_cast<std::size_t>(d)], "action"));
    if (i == 0) {
      traj.sigma = t.rows[i].back();
    } else if (t.rows[i].back() != traj.sigma) {
      throw IoError("sigma column is not constant");
    }
  }

  const Table m = read_table(transition_in);
  if (m.header.size() != static_cast<std::size_t>(d + 3) || m.header[0] != "action" || m.header[1] != "row" ||
      m.count_prefix("c", 2) != d || m.header.back() != "offset") {
    throw IoError("transition CSV header must be action,row,c1..cd,offset");
  }
  std::map<int, std::pair<Matrix, Vector>> maps;
  for (const auto& row : m.rows) {
    const int a = as_int(row[0], "action");
    const int r = as_int(row[1], "row");
    if (a < 1 || r < 1 || r > d) throw IoError("transition row index out of range");
    auto [it, fresh] = maps.try_emplace(a, Matrix::Constant(d, d, std::numeric_limits<double>::quiet_NaN()),
                                        Vector::Constant(d, std::numeric_limits<double>::quiet_NaN()));
    for (int c = 0; c < d; ++c) it->second.first(r - 1, c) = row[static_cast<std::size_t>(2 + c)];
    it->second.second[r - 1] = row.back();
  }
  int expected = 1;
  for (auto& [a, mv] : maps) {
    if (a != expected++) throw IoError("transition actions must be numbered 1..M");
    if (!mv.first.allFinite() || !mv.second.allFinite()) throw IoError("transition for action " + std::to_string(a) + " is incomplete");
    traj.transition.maps.push_back(std::move(mv.first));
    traj.transition.offsets.push_back(std::move(mv.second));
  }
  traj.validate();
  return traj;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace mlbn
