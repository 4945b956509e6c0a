#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "imooe/errors.hpp"
#include "imooe/spectral.hpp"
#include "imooe/tensor.hpp"

namespace imooe::evaluation {

/// |pred - truth|^2 / |truth|^2 over the whole forecast block.
template <class Real>
double nmse(const Tensor<Real>& pred, const Tensor<Real>& truth) {
  require_same_shape(pred, truth, "nmse");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = double(pred[i]) - double(truth[i]);
    num += d * d;
    den += double(truth[i]) * double(truth[i]);
  }
  if (!(den > 0.0)) throw Error("nmse: target has zero norm");
  return num / den;
}

struct FrmseResult {
  double total = 0.0;
  std::optional<double> low, mid, high;
};

/// Total fRMSE over shells [0, max_shell] plus the default low/mid/high bands;
/// bands that fall outside the grid are absent.
template <class Real>
FrmseResult frmse(const Tensor<Real>& pred, const Tensor<Real>& truth) {
  if (pred.rank() != 4) throw ShapeError("frmse expects [T,C,H,W]");
  const spectral::SpectralGrid grid(pred.dim(2), pred.dim(3));
  FrmseResult r;
  r.total = spectral::radial_band_rmse(pred, truth, {spectral::Band{0, grid.max_shell()}})[0];
  const auto bands = spectral::default_bands(grid);
  const auto vals = spectral::radial_band_rmse(pred, truth, bands);
  for (std::size_t b = 0; b < bands.size(); ++b) {
    if (bands[b].lo == 0) r.low = vals[b];
    if (bands[b].lo == 5) r.mid = vals[b];
    if (bands[b].lo == 13) r.high = vals[b];
  }
  return r;
}

struct FitPoint {
  std::string run_tag;
  double id_error = 0.0;
  double ood_error = 0.0;
};

struct IdOodFit {
  std::vector<FitPoint> points;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares of ood_error on id_error.
inline IdOodFit id_ood_fit(const std::vector<FitPoint>& points) {
  if (points.size() < 2) throw Error("id_ood_fit needs at least 2 points");
  const double n = double(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.id_error;
    my += p.ood_error;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& p : points) {
    sxx += (p.id_error - mx) * (p.id_error - mx);
    sxy += (p.id_error - mx) * (p.ood_error - my);
    syy += (p.ood_error - my) * (p.ood_error - my);
  }
  if (!(sxx > 0.0)) throw Error("id_ood_fit: id errors are all equal (degenerate regressor)");
  IdOodFit f;
  f.points = points;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (const auto& p : points) {
    const double e = p.ood_error - (f.intercept + f.slope * p.id_error);
    ss_res += e * e;
  }
  f.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return f;
}

}  // namespace imooe::evaluation
