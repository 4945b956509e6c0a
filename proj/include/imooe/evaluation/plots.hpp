#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "imooe/errors.hpp"
#include "imooe/evaluation/metrics.hpp"
#include "imooe/evaluation/report.hpp"

namespace imooe::evaluation {

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

inline std::string num(const std::optional<double>& v) { return v ? num(*v) : ""; }

inline std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw FormatError("cannot write " + p.string());
  return os;
}

// Blue-white-red ramp for t in [0,1].
inline void colour(double t, unsigned char rgb[3]) {
  t = std::clamp(t, 0.0, 1.0);
  const double r = t < 0.5 ? 2.0 * t : 1.0;
  const double b = t < 0.5 ? 1.0 : 2.0 * (1.0 - t);
  const double g = t < 0.5 ? 2.0 * t : 2.0 * (1.0 - t);
  rgb[0] = static_cast<unsigned char>(std::lround(255.0 * r));
  rgb[1] = static_cast<unsigned char>(std::lround(255.0 * g));
  rgb[2] = static_cast<unsigned char>(std::lround(255.0 * b));
}

}  // namespace detail

/// Per-environment metrics plus the mean/std rows.
inline void write_metrics_csv(const MetricsReport& r, const std::filesystem::path& path) {
  auto os = detail::open_out(path);
  os << "env_id,split,nmse,frmse_total,frmse_low,frmse_mid,frmse_high\n";
  for (const auto& e : r.envs)
    os << e.env_id << ',' << e.split << ',' << detail::num(e.nmse) << ',' << detail::num(e.frmse_total) << ','
       << detail::num(e.frmse_low) << ',' << detail::num(e.frmse_mid) << ',' << detail::num(e.frmse_high) << '\n';
  for (const char* stat : {"mean", "std"}) {
    os << stat << ',' << r.split;
    for (const auto& name : metric_names()) {
      os << ',';
      if (auto it = r.aggregates.find(name); it != r.aggregates.end())
        os << detail::num(stat[0] == 'm' ? it->second.mean : it->second.std);
    }
    os << '\n';
  }
}

/// Binary PPM of a scalar field, scaled to [lo, hi].
inline void write_field_ppm(const std::vector<float>& field, std::size_t rows, std::size_t cols, double lo, double hi,
                            const std::filesystem::path& path, std::size_t scale = 4) {
  if (field.size() != rows * cols) throw ShapeError("field size does not match image shape");
  auto os = detail::open_out(path);
  os << "P6\n" << cols * scale << ' ' << rows * scale << "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<unsigned char> line(cols * scale * 3);
  for (std::size_t i = rows; i-- > 0;) {
    for (std::size_t j = 0; j < cols; ++j) {
      unsigned char rgb[3];
      detail::colour((field[i * cols + j] - lo) / span, rgb);
      for (std::size_t s = 0; s < scale; ++s) std::copy(rgb, rgb + 3, line.begin() + long((j * scale + s) * 3));
    }
    for (std::size_t s = 0; s < scale; ++s) os.write(reinterpret_cast<const char*>(line.data()), long(line.size()));
  }
}

/// truth.ppm, pred.ppm (shared colour range) and error.ppm for the report's showcase.
inline void write_showcase(const MetricsReport& r, const std::filesystem::path& dir) {
  if (!r.showcase) return;
  const auto& s = *r.showcase;
  const auto [tlo, thi] = std::minmax_element(s.truth.begin(), s.truth.end());
  const double lo = *tlo, hi = *thi;
  std::vector<float> err(s.truth.size());
  double emax = 0.0;
  for (std::size_t i = 0; i < err.size(); ++i) {
    err[i] = std::abs(s.pred[i] - s.truth[i]);
    emax = std::max(emax, double(err[i]));
  }
  const std::string stem = r.split + "_env" + std::to_string(s.env_id) + "_step" + std::to_string(s.step);
  write_field_ppm(s.truth, s.rows, s.cols, lo, hi, dir / (stem + "_truth.ppm"));
  write_field_ppm(s.pred, s.rows, s.cols, lo, hi, dir / (stem + "_pred.ppm"));
  write_field_ppm(err, s.rows, s.cols, 0.0, emax, dir / (stem + "_error.ppm"));
}

/// Scatter of (id, ood) errors with the fitted line.
inline void write_id_ood_svg(const IdOodFit& fit, const std::filesystem::path& path) {
  auto os = detail::open_out(path);
  const double w = 480, h = 360, m = 50;
  double xmax = 0.0, ymax = 0.0;
  for (const auto& p : fit.points) {
    xmax = std::max(xmax, p.id_error);
    ymax = std::max(ymax, p.ood_error);
  }
  xmax = xmax > 0 ? xmax * 1.1 : 1.0;
  ymax = ymax > 0 ? ymax * 1.1 : 1.0;
  auto px = [&](double x) { return m + x / xmax * (w - 2 * m); };
  auto py = [&](double y) { return h - m - y / ymax * (h - 2 * m); };
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << m << "\" y1=\"" << h - m << "\" x2=\"" << w - m << "\" y2=\"" << h - m
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << h - m << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\" font-size=\"12\">ID error (max "
     << detail::num(xmax) << ")</text>\n";
  os << "<text x=\"14\" y=\"" << h / 2 << "\" transform=\"rotate(-90 14 " << h / 2
     << ")\" text-anchor=\"middle\" font-size=\"12\">OOD error (max " << detail::num(ymax) << ")</text>\n";
  const double y0 = fit.intercept, y1 = fit.intercept + fit.slope * xmax;
  os << "<line x1=\"" << px(0) << "\" y1=\"" << py(y0) << "\" x2=\"" << px(xmax) << "\" y2=\"" << py(y1)
     << "\" stroke=\"#c0392b\" stroke-dasharray=\"4 3\"/>\n";
  for (const auto& p : fit.points)
    os << "<circle cx=\"" << px(p.id_error) << "\" cy=\"" << py(p.ood_error)
       << "\" r=\"4\" fill=\"#2c3e50\"><title>" << p.run_tag << "</title></circle>\n";
  os << "<text x=\"" << m + 8 << "\" y=\"" << m << "\" font-size=\"12\">slope " << detail::num(fit.slope)
     << ", intercept " << detail::num(fit.intercept) << ", r2 " << detail::num(fit.r2) << "</text>\n";
  os << "</svg>\n";
}

}  // namespace imooe::evaluation
