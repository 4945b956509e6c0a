#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "imooe/autodiff.hpp"
#include "imooe/errors.hpp"

namespace imooe::training {

/// Adam with bias correction; moments kept in parameter precision.
template <std::floating_point Real>
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t t = 0;
  std::vector<Tensor<Real>> m, v;

  void init(const ad::ParameterSet<Real>& p) {
    m = p.zeros_like();
    v = p.zeros_like();
    t = 0;
  }

  void step(ad::ParameterSet<Real>& p, const ad::Gradients<Real>& g, double lr) {
    if (m.size() != p.size()) init(p);
    ++t;
    const double c1 = 1.0 - std::pow(beta1, double(t));
    const double c2 = 1.0 - std::pow(beta2, double(t));
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto& w = p.value(i);
      auto& mi = m[i];
      auto& vi = v[i];
      const auto& gi = g[i];
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double gk = double(gi[k]);
        const double mk = beta1 * double(mi[k]) + (1.0 - beta1) * gk;
        const double vk = beta2 * double(vi[k]) + (1.0 - beta2) * gk * gk;
        mi[k] = Real(mk);
        vi[k] = Real(vk);
        w[k] = Real(double(w[k]) - lr * (mk / c1) / (std::sqrt(vk / c2) + eps));
      }
    }
  }
};

}  // namespace imooe::training
