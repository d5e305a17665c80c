#include "mlbn/bench/emit.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "mlbn/data_io.hpp"
#include "mlbn/error.hpp"

namespace mlbn::bench {

namespace {

using json = nlohmann::ordered_json;

std::string num(double v) { return std::isfinite(v) ? format_double(v) : "nan"; }

double parse_num(std::string_view s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  return parse_double(s);
}

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

Sampler parse_sampler(std::string_view s) {
  if (s == "smc") return Sampler::kSmc;
  if (s == "mlsmc") return Sampler::kMlsmc;
  throw IoError("unknown sampler '" + std::string(s) + "' in curve.csv");
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// SVG helpers: a log-log panel mapping data ranges onto a fixed box.
struct LogAxes {
  double x0, x1, y0, y1;  // log2 data bounds
  double left = 80, top = 40, width = 520, height = 380;

  double px(double x) const { return left + (std::log2(x) - x0) / (x1 - x0) * width; }
  double py(double y) const { return top + height - (std::log2(y) - y0) / (y1 - y0) * height; }
};

LogAxes make_axes(const std::vector<double>& xs, const std::vector<double>& ys) {
  LogAxes a{};
  auto bounds = [](const std::vector<double>& v, double& lo, double& hi) {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (double x : v) {
      if (x > 0.0 && std::isfinite(x)) {
        lo = std::min(lo, std::log2(x));
        hi = std::max(hi, std::log2(x));
      }
    }
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    lo = std::floor(lo - 0.25);
    hi = std::ceil(hi + 0.25);
    if (hi <= lo) hi = lo + 1.0;
  };
  bounds(xs, a.x0, a.x1);
  bounds(ys, a.y0, a.y1);
  a.left = 80;
  a.top = 40;
  a.width = 520;
  a.height = 380;
  return a;
}

void frame(std::ostringstream& svg, const LogAxes& a, const std::string& title, const std::string& xlabel,
           const std::string& ylabel) {
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"680\" height=\"500\" viewBox=\"0 0 680 500\""
      << " font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"680\" height=\"500\" fill=\"white\"/>\n"
      << "<text x=\"340\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n"
      << "<rect x=\"" << a.left << "\" y=\"" << a.top << "\" width=\"" << a.width << "\" height=\"" << a.height
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double e = a.x0; e <= a.x1 + 1e-9; e += 1.0) {
    const double x = a.left + (e - a.x0) / (a.x1 - a.x0) * a.width;
    svg << "<line x1=\"" << num(x) << "\" y1=\"" << a.top + a.height << "\" x2=\"" << num(x) << "\" y2=\""
        << a.top + a.height + 5 << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << num(x) << "\" y=\"" << a.top + a.height + 18 << "\" text-anchor=\"middle\">2^"
        << static_cast<int>(e) << "</text>\n";
  }
  for (double e = a.y0; e <= a.y1 + 1e-9; e += 1.0) {
    const double y = a.top + a.height - (e - a.y0) / (a.y1 - a.y0) * a.height;
    svg << "<line x1=\"" << a.left - 5 << "\" y1=\"" << num(y) << "\" x2=\"" << a.left << "\" y2=\"" << num(y)
        << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << a.left - 8 << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">2^" << static_cast<int>(e)
        << "</text>\n";
  }
  svg << "<text x=\"" << a.left + a.width / 2 << "\" y=\"" << a.top + a.height + 40 << "\" text-anchor=\"middle\">"
      << xlabel << "</text>\n"
      << "<text x=\"20\" y=\"" << a.top + a.height / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
      << a.top + a.height / 2 << ")\">" << ylabel << "</text>\n";
}

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

std::string bench_csv(const ExperimentConfig& config, const std::vector<ReplicationResult>& results) {
  std::ostringstream out;
  out << "sampler,L,alpha,replication,cost,sq_error\n";
  for (const auto& r : results) {
    out << to_string(r.sampler) << ',' << r.level << ',' << num(config.alpha) << ',' << r.replication << ','
        << num(r.cost) << ',' << num(r.sq_error) << '\n';
  }
  return out.str();
}

std::string curve_csv(const std::vector<MseCurve>& curves) {
  std::ostringstream out;
  out << "sampler,L,alpha,mean_cost,mse,mse_se,replications,failures,p10,p90\n";
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      out << to_string(c.sampler) << ',' << p.level << ',' << num(c.alpha) << ',' << num(p.mean_cost) << ','
          << num(p.mse) << ',' << num(p.mse_se) << ',' << p.replications << ',' << p.failures << ',' << num(p.p10)
          << ',' << num(p.p90) << '\n';
    }
  }
  return out.str();
}

std::vector<MseCurve> parse_curve_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "sampler,L,alpha,mean_cost,mse,mse_se,replications,failures,p10,p90") {
    throw IoError("curve.csv has an unexpected header");
  }
  std::vector<MseCurve> curves;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 10) throw IoError("curve.csv row has " + std::to_string(f.size()) + " fields");
    const Sampler s = parse_sampler(f[0]);
    auto it = std::find_if(curves.begin(), curves.end(), [&](const MseCurve& c) { return c.sampler == s; });
    if (it == curves.end()) {
      curves.push_back({});
      it = curves.end() - 1;
      it->sampler = s;
      it->alpha = parse_num(f[2]);
    }
    CurvePoint p;
    p.level = static_cast<int>(parse_num(f[1]));
    p.mean_cost = parse_num(f[3]);
    p.mse = parse_num(f[4]);
    p.mse_se = parse_num(f[5]);
    p.replications = static_cast<int>(parse_num(f[6]));
    p.failures = static_cast<int>(parse_num(f[7]));
    p.p10 = parse_num(f[8]);
    p.p90 = parse_num(f[9]);
    it->points.push_back(p);
  }
  for (auto& c : curves) {
    std::vector<double> mse;
    std::vector<double> cost;
    for (const auto& p : c.points) {
      if (p.mse > 0.0 && std::isfinite(p.mse)) {
        mse.push_back(p.mse);
        cost.push_back(p.mean_cost);
      }
    }
    if (mse.size() >= 3) {
      const LoglogFit fit = fit_loglog_slope(mse, cost);
      c.xi = -fit.slope;
      c.xi_se = fit.slope_se;
      c.intercept = fit.intercept;
    }
  }
  return curves;
}

std::string curve_svg(const std::vector<MseCurve>& curves, const std::string& title) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      xs.push_back(p.mse);
      xs.push_back(p.p10);
      xs.push_back(p.p90);
      ys.push_back(p.mean_cost);
    }
  }
  const LogAxes a = make_axes(xs, ys);
  std::ostringstream svg;
  frame(svg, a, title, "MSE", "cost");

  // slope -1 guide through the first SMC point, or the first point at all
  const CurvePoint* anchor = nullptr;
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      if (!anchor && p.mse > 0.0 && std::isfinite(p.mse)) anchor = &p;
    }
  }
  if (anchor) {
    const double lx = std::log2(anchor->mse);
    const double ly = std::log2(anchor->mean_cost);
    // clip the line to the panel
    double xa = a.x0;
    double xb = a.x1;
    xa = std::max(xa, lx + ly - a.y1);
    xb = std::min(xb, lx + ly - a.y0);
    if (xb > xa) {
      const double ya = ly - (xa - lx);
      const double yb = ly - (xb - lx);
      svg << "<line class=\"guide\" x1=\"" << num(a.px(std::exp2(xa))) << "\" y1=\"" << num(a.py(std::exp2(ya)))
          << "\" x2=\"" << num(a.px(std::exp2(xb))) << "\" y2=\"" << num(a.py(std::exp2(yb)))
          << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
    }
  }

  int ci = 0;
  double legend_y = a.top + 16;
  for (const auto& c : curves) {
    const char* color = kColors[ci++ % 8];
    std::ostringstream pts;
    for (const auto& p : c.points) {
      if (!(p.mse > 0.0) || !std::isfinite(p.mse)) continue;
      pts << num(a.px(p.mse)) << ',' << num(a.py(p.mean_cost)) << ' ';
      if (p.p10 > 0.0 && p.p90 > 0.0) {
        svg << "<line x1=\"" << num(a.px(p.p10)) << "\" y1=\"" << num(a.py(p.mean_cost)) << "\" x2=\""
            << num(a.px(p.p90)) << "\" y2=\"" << num(a.py(p.mean_cost)) << "\" stroke=\"" << color
            << "\" stroke-opacity=\"0.5\"/>\n";
      }
      svg << "<circle cx=\"" << num(a.px(p.mse)) << "\" cy=\"" << num(a.py(p.mean_cost)) << "\" r=\"3\" fill=\""
          << color << "\"/>\n";
    }
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts.str()
        << "\"/>\n";
    std::string label(to_string(c.sampler));
    if (c.xi) label += " (xi " + format_double(std::round(*c.xi * 100.0) / 100.0) + ")";
    svg << "<text x=\"" << a.left + a.width - 10 << "\" y=\"" << num(legend_y) << "\" text-anchor=\"end\" fill=\""
        << color << "\">" << label << "</text>\n";
    legend_y += 16;
  }
  svg << "<text x=\"" << a.left + a.width - 10 << "\" y=\"" << num(legend_y)
      << "\" text-anchor=\"end\" fill=\"gray\">slope -1</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

std::string rate_svg(const std::vector<RateSeries>& series) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& s : series) {
    for (const auto& m : s.moments) {
      xs.push_back(std::exp2(m.level));
      if (m.estimate > 0.0) ys.push_back(m.estimate);
    }
  }
  const LogAxes a = make_axes(xs, ys);
  std::ostringstream svg;
  frame(svg, a, "Increment second moment against width", "width 2^l", "E|f_l - f_{l-1}|^2");
  int ci = 0;
  double legend_y = a.top + 16;
  for (const auto& s : series) {
    const char* color = kColors[ci++ % 8];
    std::ostringstream pts;
    for (const auto& m : s.moments) {
      if (!(m.estimate > 0.0)) continue;
      pts << num(a.px(std::exp2(m.level))) << ',' << num(a.py(m.estimate)) << ' ';
      svg << "<circle cx=\"" << num(a.px(std::exp2(m.level))) << "\" cy=\"" << num(a.py(m.estimate))
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"" << pts.str() << "\"/>\n";
    svg << "<text x=\"" << a.left + a.width - 10 << "\" y=\"" << num(legend_y) << "\" text-anchor=\"end\" fill=\""
        << color << "\">alpha " << num(s.alpha) << " D " << s.depth << ' ' << to_string(s.activation) << " slope "
        << format_double(std::round(s.fit.slope * 100.0) / 100.0) << "</text>\n";
    legend_y += 16;
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string bench_metadata_json(const ExperimentConfig& config, const BenchResult& result) {
  json meta = json::object();
  meta["kind"] = "bench";
  meta["versions"] = {{"mlbn", MLBN_VERSION},
                      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION)},
                      {"compiler", __VERSION__}};
  meta["seeds"] = {{"master", config.seed}, {"streams", stream_tags()}};
  meta["config"] = json::parse(config_to_json(config));
  meta["panel"] = "panel_size inputs drawn once from the task's input law with the panel stream";
  const Reference& ref = result.reference;
  meta["reference"] = {{"level", ref.level},
                       {"particles", ref.particles},
                       {"stages", ref.stages},
                       {"cost", ref.cost},
                       {"fingerprint", ref.fingerprint},
                       {"checksum_fnv1a64", ref.checksum}};
  meta["error"] = "squared error of the posterior predictive mean, averaged over panel inputs and outputs";
  meta["cost_unit"] = "likelihood evaluations times parameter count";
  json curves = json::array();
  for (const auto& c : result.curves) {
    int failures = 0;
    for (const auto& p : c.points) failures += p.failures;
    curves.push_back({{"sampler", std::string(to_string(c.sampler))},
                      {"xi", optional_json(c.xi)},
                      {"xi_se", optional_json(c.xi_se)},
                      {"intercept_log2", optional_json(c.intercept)},
                      {"valid", c.valid},
                      {"monotone", c.monotone},
                      {"failures", failures}});
  }
  meta["curves"] = curves;
  const MseCurve* smc = result.curve(Sampler::kSmc);
  const MseCurve* ml = result.curve(Sampler::kMlsmc);
  if (smc && ml && smc->xi && !ml->points.empty()) {
    const CurvePoint& last = ml->points.back();
    if (last.mse > 0.0 && std::isfinite(last.mse)) {
      const double smc_cost = smc->cost_at(last.mse);
      meta["matched_mse"] = {{"level", last.level},
                             {"mse", last.mse},
                             {"mlsmc_cost", last.mean_cost},
                             {"smc_cost_from_fit", smc_cost},
                             {"ratio", last.mean_cost / smc_cost}};
    }
  }
  json failed = json::array();
  for (const auto& r : result.replications) {
    if (r.failed) {
      failed.push_back({{"sampler", std::string(to_string(r.sampler))},
                        {"L", r.level},
                        {"replication", r.replication},
                        {"reason", r.failure}});
    }
  }
  meta["failed_replications"] = failed;
  return meta.dump(2) + "\n";
}

void emit_bench(const ExperimentConfig& config, const BenchResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "bench.csv", bench_csv(config, result.replications));
  write_file_atomic(dir / "curve.csv", curve_csv(result.curves));
  write_file_atomic(dir / "plot.svg",
                    curve_svg(result.curves, "Cost against MSE, alpha " + format_double(config.alpha)));
  write_file_atomic(dir / "metadata.json", bench_metadata_json(config, result));
}

void replot(const std::filesystem::path& dir) {
  const auto curves = parse_curve_csv(read_file(dir / "curve.csv"));
  std::string title = "Cost against MSE";
  if (!curves.empty()) title += ", alpha " + format_double(curves.front().alpha);
  write_file_atomic(dir / "plot.svg", curve_svg(curves, title));
}

}  // namespace mlbn::bench
