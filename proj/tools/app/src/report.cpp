#include "age/app/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "age/error.hpp"

namespace age::app {
namespace {

std::ofstream open_text(const std::filesystem::path& path, bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

void check(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

nlohmann::json MetricsRecord::to_json() const {
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [name, value] : metrics) {
    m[name] = std::isfinite(value) ? nlohmann::json(value) : nlohmann::json(nullptr);
  }
  return {{"run_id", run_id},
          {"command", command},
          {"config_hash", config_hash},
          {"metrics", m},
          {"started_at", started_at},
          {"finished_at", finished_at}};
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t secs = std::chrono::system_clock::to_time_t(now);
  const auto millis =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(millis));
  return out;
}

std::string make_run_id(const std::string& command, const std::string& config_hash) {
  return command + "-" + config_hash;
}

void write_lines(const std::filesystem::path& path, const std::vector<nlohmann::json>& lines,
                 bool append) {
  auto out = open_text(path, append);
  for (const auto& line : lines) out << line.dump() << '\n';
  check(out, path);
}

void write_csv(const std::filesystem::path& path, const std::string& x_name,
               const std::vector<double>& x, const std::vector<Series>& series) {
  auto out = open_text(path, false);
  out << x_name;
  for (const auto& s : series) out << ',' << s.name;
  out << '\n';
  for (std::size_t i = 0; i < x.size(); ++i) {
    out << fmt("%.17g", x[i]);
    for (const auto& s : series) out << ',' << fmt("%.17g", s.values.at(i));
    out << '\n';
  }
  check(out, path);
}

void write_svg(const std::filesystem::path& path, const std::string& x_name,
               const std::vector<double>& x, const std::vector<Series>& series) {
  constexpr double kWidth = 480, kPanel = 200, kMargin = 48;
  const double height = kPanel * static_cast<double>(series.size()) + kMargin;
  auto out = open_text(path, false);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (x.empty()) {
    out << "</svg>\n";
    check(out, path);
    return;
  }
  const auto [xmin_it, xmax_it] = std::minmax_element(x.begin(), x.end());
  const double xmin = *xmin_it;
  const double xspan = *xmax_it > xmin ? *xmax_it - xmin : 1.0;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& v = series[k].values;
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it;
    const double span = *hi_it > lo ? *hi_it - lo : 1.0;
    const double top = kMargin / 2 + kPanel * static_cast<double>(k);
    const double plot_w = kWidth - 2 * kMargin, plot_h = kPanel - kMargin;
    auto px = [&](double xv) { return kMargin + (xv - xmin) / xspan * plot_w; };
    auto py = [&](double yv) { return top + plot_h - (yv - lo) / span * plot_h; };
    out << "<text x=\"" << kMargin << "\" y=\"" << fmt("%.1f", top - 6) << "\">" << series[k].name
        << " vs " << x_name << "</text>\n";
    out << "<rect x=\"" << kMargin << "\" y=\"" << fmt("%.1f", top) << "\" width=\"" << plot_w
        << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"#999\"/>\n";
    out << "<text x=\"4\" y=\"" << fmt("%.1f", top + 10) << "\">" << fmt("%.4g", *hi_it) << "</text>\n";
    out << "<text x=\"4\" y=\"" << fmt("%.1f", top + plot_h) << "\">" << fmt("%.4g", lo) << "</text>\n";
    out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < x.size(); ++i) {
      out << (i ? " " : "") << fmt("%.2f", px(x[i])) << ',' << fmt("%.2f", py(v.at(i)));
    }
    out << "\"/>\n";
    for (std::size_t i = 0; i < x.size(); ++i) {
      out << "<circle cx=\"" << fmt("%.2f", px(x[i])) << "\" cy=\"" << fmt("%.2f", py(v[i]))
          << "\" r=\"2.5\" fill=\"#1f77b4\"/>\n";
      out << "<text x=\"" << fmt("%.2f", px(x[i]) - 8) << "\" y=\"" << fmt("%.1f", top + plot_h + 14)
          << "\">" << fmt("%.3g", x[i]) << "</text>\n";
    }
  }
  out << "</svg>\n";
  check(out, path);
}

}  // namespace age::app
