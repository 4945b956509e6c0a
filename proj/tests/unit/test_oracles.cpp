#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <regex>

#include "../oracles/fd_gradient_check.hpp"
#include "../oracles/fine_reference.hpp"
#include "../oracles/naive_dft.hpp"
#include "imooe/autodiff.hpp"
#include "imooe/fft.hpp"
#include "imooe/random.hpp"

using namespace imooe;

namespace {

std::vector<double> random_field(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = standard_normal(rng);
  return v;
}

std::vector<std::string> includes_of(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::vector<std::string> out;
  const std::regex inc(R"(^\s*#\s*include\s*[<"]([^>"]+)[>"])");
  std::smatch m;
  for (std::string line; std::getline(is, line);)
    if (std::regex_search(line, m, inc)) out.push_back(m[1]);
  return out;
}

}  // namespace

TEST(Oracles, ConstantFieldHasOnlyDc) {
  const auto s = oracles::naive_dft2(std::vector<double>(36, 2.5), 6, 6);
  EXPECT_NEAR(s[0].real(), 2.5, 1e-15);
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LT(std::abs(s[i]), 1e-14);
}

TEST(Oracles, PureToneHasTwoConjugateBins) {
  const std::size_t h = 8, w = 8;
  std::vector<double> f(h * w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) f[i * w + j] = std::sin(2.0 * std::numbers::pi * double(j) / double(w));
  const auto s = oracles::naive_dft2(f, h, w);
  EXPECT_NEAR(std::abs(s[1]), 0.5, 1e-14);
  EXPECT_NEAR(std::abs(s[w - 1]), 0.5, 1e-14);
  EXPECT_NEAR(std::abs(s[1] - std::conj(s[w - 1])), 0.0, 1e-14);
  double rest = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != 1 && i != w - 1) rest += std::abs(s[i]);
  EXPECT_LT(rest, 1e-13);
}

TEST(Oracles, NaiveDftMatchesFftOn8x8) {
  const std::size_t h = 8, w = 8;
  Fft2<double> fft(h, w);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto f = random_field(h * w, seed);
    const auto naive = oracles::naive_dft2(f, h, w);
    const auto fast = fft.forward(f);
    double num = 0.0, den = 0.0;
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t q = 0; q <= w / 2; ++q) {
        const auto a = fast[r * (w / 2 + 1) + q] / double(h * w);
        num += std::norm(a - naive[r * w + q]);
        den += std::norm(naive[r * w + q]);
      }
    EXPECT_LE(std::sqrt(num / den), 1e-12);
  }
}

TEST(Oracles, NaiveDftRejectsLargeGrids) {
  EXPECT_THROW(oracles::naive_dft2(std::vector<double>(17 * 17), 17, 17), std::invalid_argument);
  EXPECT_THROW(oracles::naive_dft2(std::vector<double>(10), 4, 4), std::invalid_argument);
}

TEST(Oracles, GradientCheckExactOnQuadratic) {
  const std::vector<double> a{1.5, -2.0, 0.25, 3.0};
  auto loss = [&](const std::vector<double>& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += a[i] * p[i] * p[i] + p[i];
    return s;
  };
  const std::vector<double> p{0.3, -1.1, 2.0, 0.7};
  std::vector<double> g(4);
  for (std::size_t i = 0; i < 4; ++i) g[i] = 2.0 * a[i] * p[i] + 1.0;
  const auto r = oracles::fd_gradient_check(loss, p, g, 1e-4);
  EXPECT_LE(r.max_rel_error, 1e-9);
  EXPECT_EQ(r.probes, 4u);
  g[2] += 0.1;
  EXPECT_EQ(oracles::fd_gradient_check(loss, p, g, 1e-4).worst_index, 2u);
}

TEST(Oracles, GradientCheckRejectsNonFiniteProbe) {
  auto loss = [](const std::vector<double>& p) { return std::log(p[0]); };
  EXPECT_THROW(oracles::fd_gradient_check(loss, {1e-6}, {1e6}, 1e-5), std::runtime_error);
}

TEST(Oracles, GradientCheckOnMaskDiversityOfLogits) {
  ad::ParameterSet<double> ps;
  Tensor<double> logits({2, 4});
  Rng rng(31);
  for (auto& v : logits.data()) v = standard_normal(rng);
  const auto pid = ps.add("mask_logits", logits);
  auto grads = ps.zeros_like();
  {
    ad::Tape<double> t(ps, &grads);
    t.backward(ad::mask_diversity(t, ad::soft_mask(t, pid, 1.0, false)));
  }
  auto loss = [&](const std::vector<double>& flat) {
    auto p = ps;
    p.unflatten(flat);
    ad::Tape<double> t(p, nullptr);
    return t.value(ad::mask_diversity(t, ad::soft_mask(t, pid, 1.0, false)))[0];
  };
  EXPECT_LE(oracles::fd_gradient_check(loss, ps.flatten(), ad::flatten(grads), 1e-6).max_rel_error, 1e-6);
}

TEST(Oracles, FineReferenceKeepsZeroBurgersAtZero) {
  for (std::size_t refinement : {1u, 2u, 4u}) {
    datasets::BgProblem p;
    p.init = Tensor<double>({2, 16, 16});
    datasets::SolveOptions opt;
    opt.resolution = 16;
    opt.refinement = refinement;
    for (double v : datasets::solve_bg(p, opt).data()) EXPECT_EQ(v, 0.0);
  }
  const auto env = datasets::sample_environments(datasets::system_spec(datasets::SystemId::DR),
                                                 datasets::Split::train_id, 1, 0)[0];
  EXPECT_THROW(oracles::fine_reference_solve(env, 3, 16, 0, 1), std::invalid_argument);
}

TEST(Oracles, ObservedOrderOfSyntheticErrors) {
  // errors C dt^4: coarse 16 units, half 1 unit from the reference
  Tensor<double> ref({4}), coarse({4}, std::vector<double>{17.0, 0, 0, 0}), half({4}, std::vector<double>{1.0, 0, 0, 0});
  // r = 17 -> p = log2(16) = 4
  EXPECT_NEAR(oracles::observed_order(coarse, half, ref), 4.0, 1e-12);
}

TEST(Oracles, SpectralOraclesIncludeNoProductionCode) {
  const std::filesystem::path dir = std::filesystem::path(IMOOE_SOURCE_DIR) / "tests" / "oracles";
  for (const char* name : {"naive_dft.hpp", "fd_gradient_check.hpp"})
    for (const auto& inc : includes_of(dir / name)) EXPECT_EQ(inc.find("imooe"), std::string::npos) << name << ": " << inc;
  for (const auto& inc : includes_of(dir / "fine_reference.hpp")) {
    EXPECT_EQ(inc.find("imooe/spectral"), std::string::npos) << inc;
    EXPECT_EQ(inc.find("imooe/fft"), std::string::npos) << inc;
    EXPECT_EQ(inc.find("imooe/model"), std::string::npos) << inc;
  }
}
