#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "../oracles/fd_gradient_check.hpp"
#include "imooe/model/checkpoint.hpp"
#include "imooe/model/mooe.hpp"

using namespace imooe;
using namespace imooe::model;

namespace {

ModelConfig tiny(std::size_t channels = 1, std::size_t n = 16) {
  ModelConfig c;
  c.channels = channels;
  c.rows = c.cols = n;
  c.window = 3;
  c.layers = 2;
  c.width = 8;
  c.modes = 4;
  c.head_width = 8;
  c.fusion_width = 8;
  c.cond_dim = 2;
  c.init_seed = 17;
  return c;
}

template <class Real>
Tensor<Real> random_tensor(Shape s, std::uint64_t seed, double scale = 1.0) {
  Tensor<Real> t(std::move(s));
  Rng rng(seed);
  for (auto& v : t.data()) v = Real(scale * standard_normal(rng));
  return t;
}

template <class Real>
std::size_t pid(const ad::ParameterSet<Real>& p, const std::string& name) {
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p.name(i) == name) return i;
  throw std::runtime_error("no parameter " + name);
}

template <class Real>
void zero_head_output(MooeModel<Real>& m, std::size_t i, Real bias = 0) {
  auto& p = m.params();
  for (auto& v : p.value(pid(p, "head" + std::to_string(i) + ".out.w")).data()) v = 0;
  for (auto& v : p.value(pid(p, "head" + std::to_string(i) + ".out.b")).data()) v = bias;
}

struct ExpertInputs {
  Tensor<double> coords, window, derivs;
};

ExpertInputs inputs_for(const MooeModel<double>& m, std::uint64_t seed) {
  const auto& c = m.config();
  return {m.coordinates(), random_tensor<double>({c.window * c.channels, c.rows, c.cols}, seed),
          random_tensor<double>({c.stack_channels(), c.rows, c.cols}, seed + 1)};
}

Tensor<double> run_expert(const MooeModel<double>& m, const ExpertInputs& in, const Tensor<double>& mask_row) {
  ad::Tape<double> t(m.params(), nullptr);
  return t.value(m.expert_forward(t, 0, t.constant(in.coords), t.constant(in.window), t.constant(in.derivs),
                                  t.constant(mask_row)));
}

}  // namespace

TEST(Model, ZeroMaskEntryMakesOutputBlindToThatChannel) {
  const MooeModel<double> m(tiny(2));
  auto in = inputs_for(m, 1);
  const std::size_t s = m.config().stack_channels();
  for (std::size_t j = 0; j < s; ++j) {
    Tensor<double> mask({s}, 1.0);
    mask[j] = 0.0;
    const auto base = run_expert(m, in, mask);
    auto perturbed = in;
    Rng rng(j);
    for (std::size_t k = 0; k < 16 * 16; ++k) perturbed.derivs[j * 256 + k] += 10.0 * standard_normal(rng);
    EXPECT_EQ(run_expert(m, perturbed, mask).storage(), base.storage()) << "channel " << j;
  }
}

TEST(Model, AllZeroMaskIgnoresDerivatives) {
  const MooeModel<double> m(tiny());
  auto in = inputs_for(m, 2);
  const Tensor<double> mask({m.config().stack_channels()}, 0.0);
  const auto base = run_expert(m, in, mask);
  in.derivs = random_tensor<double>(in.derivs.shape(), 77);
  EXPECT_EQ(run_expert(m, in, mask).storage(), base.storage());
}

TEST(Model, AllOnesMaskEqualsUnmaskedModel) {
  auto cfg = tiny();
  MooeModel<double> learned(cfg);
  cfg.mask = MaskMode::none;
  const MooeModel<double> unmasked(cfg);
  auto& p = learned.params();
  for (auto& v : p.value(learned.mask_param()).data()) v = 3.0;
  const auto hist = random_tensor<double>({3, 1, 16, 16}, 3);
  const std::vector<double> cond{0.5, -0.2};
  EXPECT_EQ(learned.predict(hist, 2, cond, MaskUse::hard).storage(),
            unmasked.predict(hist, 2, cond, MaskUse::hard).storage());
}

TEST(Model, ExpertOutputShapeForTwoChannels64) {
  auto cfg = tiny(2, 64);
  cfg.modes = 16;
  const MooeModel<double> m(cfg);
  const auto y = run_expert(m, inputs_for(m, 4), Tensor<double>({10}, 1.0));
  EXPECT_EQ(y.shape(), (Shape{2, 64, 64}));
}

TEST(Model, DerivativeChannelMismatchRejected) {
  const MooeModel<double> m(tiny(2));
  auto in = inputs_for(m, 5);
  in.derivs = Tensor<double>({9, 16, 16});
  EXPECT_THROW(run_expert(m, in, Tensor<double>({10}, 1.0)), ShapeError);
}

TEST(Model, AdditiveSingleExpertEqualsHead) {
  auto cfg = tiny();
  cfg.experts = 1;
  const MooeModel<double> m(cfg);
  ad::Tape<double> t(m.params(), nullptr);
  const auto sigma = t.constant(random_tensor<double>({1, 16, 16}, 6));
  const auto cf = t.constant(m.condition_field({0.1, 0.2}));
  EXPECT_EQ(t.value(m.fuse(t, {sigma}, cf)).storage(), t.value(m.head(t, 0, sigma, cf)).storage());
}

TEST(Model, AdditiveFusionWithSilentHeadEqualsOtherHead) {
  MooeModel<double> m(tiny());
  zero_head_output(m, 1);
  ad::Tape<double> t(m.params(), nullptr);
  const auto s0 = t.constant(random_tensor<double>({1, 16, 16}, 7));
  const auto s1 = t.constant(random_tensor<double>({1, 16, 16}, 8));
  const auto cf = t.constant(m.condition_field({0.3, 0.4}));
  EXPECT_EQ(t.value(m.fuse(t, {s0, s1}, cf)).storage(), t.value(m.head(t, 0, s0, cf)).storage());
}

TEST(Model, ConditionLengthMismatchRejected) {
  const MooeModel<double> m(tiny());
  EXPECT_THROW(m.condition_field({1.0}), ShapeError);
  EXPECT_THROW(m.predict(random_tensor<double>({3, 1, 16, 16}, 9), 1, {1.0, 2.0, 3.0}, MaskUse::hard), ShapeError);
}

TEST(Model, ZeroIncrementRepeatsLastFrame) {
  for (auto fusion : {FusionMode::additive, FusionMode::nonlinear}) {
    auto cfg = tiny();
    cfg.fusion = fusion;
    MooeModel<double> m(cfg);
    if (fusion == FusionMode::additive) {
      zero_head_output(m, 0);
      zero_head_output(m, 1);
    } else {
      auto& p = m.params();
      for (auto& v : p.value(pid(p, "fusion.out.w")).data()) v = 0;
      for (auto& v : p.value(pid(p, "fusion.out.b")).data()) v = 0;
    }
    const auto hist = random_tensor<double>({3, 1, 16, 16}, 10);
    const auto out = m.predict(hist, 4, {0.0, 1.0}, MaskUse::soft);
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t i = 0; i < 256; ++i) EXPECT_EQ(out[k * 256 + i], hist[2 * 256 + i]);
  }
}

TEST(Model, ConstantIncrementTelescopes) {
  MooeModel<double> m(tiny());
  zero_head_output(m, 0, 0.25);
  zero_head_output(m, 1, 0.5);
  const auto hist = random_tensor<double>({3, 1, 16, 16}, 11);
  const auto out = m.predict(hist, 5, {0.0, 1.0}, MaskUse::hard);
  for (std::size_t k = 0; k < 5; ++k)
    for (std::size_t i = 0; i < 256; ++i) EXPECT_NEAR(out[k * 256 + i], hist[2 * 256 + i] + double(k + 1) * 0.75, 1e-12);
}

TEST(Model, RolloutShapeForElevenSteps) {
  auto cfg = tiny(2);
  cfg.window = 10;
  const MooeModel<float> m(cfg);
  const auto out = m.predict(random_tensor<float>({10, 2, 16, 16}, 12), 11, {0.0, 0.0}, MaskUse::hard);
  EXPECT_EQ(out.shape(), (Shape{11, 2, 16, 16}));
}

TEST(Model, RolloutRejectsBadHistoryAndZeroSteps) {
  const MooeModel<double> m(tiny());
  EXPECT_THROW(m.predict(Tensor<double>({2, 1, 16, 16}), 1, {0, 0}, MaskUse::hard), ShapeError);
  EXPECT_THROW(m.predict(Tensor<double>({3, 1, 16, 16}), 0, {0, 0}, MaskUse::hard), ConfigError);
}

TEST(Model, NonFiniteFrameAbortsWithStepIndex) {
  MooeModel<double> m(tiny());
  zero_head_output(m, 0, std::numeric_limits<double>::infinity());
  try {
    m.predict(Tensor<double>({3, 1, 16, 16}), 3, {0, 0}, MaskUse::hard);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos);
  }
}

TEST(Model, RolloutDoesNotMutateInputs) {
  const MooeModel<double> m(tiny());
  const auto hist = random_tensor<double>({3, 1, 16, 16}, 13);
  const auto copy = hist;
  m.predict(hist, 2, {0, 0}, MaskUse::soft);
  EXPECT_EQ(hist.storage(), copy.storage());
}

TEST(Model, ParameterCountLinearInExperts) {
  auto count = [](std::size_t k) {
    auto cfg = tiny();
    cfg.experts = k;
    return MooeModel<double>(cfg).params().scalar_count();
  };
  EXPECT_EQ(count(2) - count(1), count(3) - count(2));
}

TEST(Model, InitialisationAndRolloutAreDeterministic) {
  const MooeModel<double> a(tiny()), b(tiny());
  EXPECT_EQ(weight_hash(a.params()), weight_hash(b.params()));
  const auto hist = random_tensor<double>({3, 1, 16, 16}, 14);
  EXPECT_EQ(a.predict(hist, 3, {1, 2}, MaskUse::soft).storage(), b.predict(hist, 3, {1, 2}, MaskUse::soft).storage());
  auto cfg = tiny();
  cfg.init_seed = 18;
  EXPECT_NE(weight_hash(MooeModel<double>(cfg).params()), weight_hash(a.params()));
}

TEST(Model, HardMasksThresholdAtZeroLogitAndRespectKindGate) {
  auto cfg = tiny();
  cfg.derivative_kinds = {"dx", "dxx"};
  MooeModel<double> m(cfg);
  auto& logits = m.params().value(m.mask_param());
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = i % 2 ? 1.0 : -1.0;
  logits[0] = 0.0;
  const auto h = m.hard_masks();
  // kinds dx (0) and dxx (2) enabled; one state channel
  const std::vector<double> expect{1, 0, 0, 0, 0, 1, 0, 1, 0, 0};
  EXPECT_EQ(h.storage(), expect);
}

TEST(Model, ConfigRejectsBadValues) {
  auto cfg = tiny();
  cfg.modes = 9;
  EXPECT_THROW(MooeModel<double>{cfg}, ConfigError);
  cfg = tiny();
  cfg.derivative_kinds = {"dz"};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = tiny();
  cfg.experts = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  nlohmann::json j = tiny();
  j["unknown_key"] = 1;
  EXPECT_THROW(j.get<ModelConfig>(), ConfigError);
  EXPECT_EQ(nlohmann::json(tiny()).get<ModelConfig>().width, 8u);
}

namespace {

template <class Real>
double rollout_loss(const MooeModel<Real>& m, const ad::ParameterSet<Real>& params, ad::Gradients<Real>* grads,
                    const Tensor<Real>& hist, const Tensor<Real>& target) {
  ad::Tape<Real> t(params, grads);
  const auto r = m.rollout(t, hist, 3, {0.3, -0.7}, MaskUse::soft);
  std::vector<ad::Var> terms;
  for (std::size_t k = 0; k < 3; ++k)
    terms.push_back(ad::mse(t, r.frames[k], Tensor<Real>({1, 16, 16}, std::vector<Real>(target.slab(k).begin(),
                                                                                         target.slab(k).end()))));
  const auto loss = ad::weighted_sum(t, terms, std::vector<Real>(3, Real(1)));
  if (grads) t.backward(loss);
  return double(t.value(loss)[0]);
}

std::vector<std::size_t> probe_indices(std::size_t n, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  return out;
}

/// Probes at least one entry of every parameter tensor plus random extras.
template <class Real>
std::vector<std::size_t> probes_for(const ad::ParameterSet<Real>& p) {
  std::vector<std::size_t> out;
  std::size_t off = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    out.push_back(off + p.value(i).size() / 2);
    off += p.value(i).size();
  }
  auto extra = probe_indices(off, 60, 5);
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

}  // namespace

TEST(Model, ThreeStepRolloutGradientMatchesFiniteDifferenceF64) {
  auto cfg = tiny();
  cfg.fusion = FusionMode::nonlinear;
  const MooeModel<double> m(cfg);
  const auto hist = random_tensor<double>({3, 1, 16, 16}, 20);
  const auto target = random_tensor<double>({3, 1, 16, 16}, 21);
  auto grads = m.params().zeros_like();
  rollout_loss(m, m.params(), &grads, hist, target);
  auto loss = [&](const std::vector<double>& flat) {
    auto p = m.params();
    p.unflatten(flat);
    return rollout_loss<double>(m, p, nullptr, hist, target);
  };
  const auto r = oracles::fd_gradient_check(loss, m.params().flatten(), ad::flatten(grads), 1e-6,
                                            probes_for(m.params()));
  EXPECT_LE(r.max_rel_error, 1e-5) << "worst " << m.params().size() << " idx " << r.worst_index << " fd "
                                   << r.worst_fd << " ad " << r.worst_ad;
}

TEST(Model, ThreeStepRolloutGradientMatchesFiniteDifferenceF32) {
  const MooeModel<float> mf(tiny());
  const MooeModel<double> md(tiny());
  const auto hist = random_tensor<double>({3, 1, 16, 16}, 22);
  const auto target = random_tensor<double>({3, 1, 16, 16}, 23);
  auto grads = mf.params().zeros_like();
  rollout_loss(mf, mf.params(), &grads, hist.cast<float>(), target.cast<float>());
  auto loss = [&](const std::vector<double>& flat) {
    auto p = md.params();
    p.unflatten(flat);
    return rollout_loss<double>(md, p, nullptr, hist, target);
  };
  const auto r = oracles::fd_gradient_check(loss, mf.params().cast<double>().flatten(), ad::flatten(grads), 1e-6,
                                            probes_for(mf.params()));
  EXPECT_LE(r.max_rel_error, 1e-3) << "idx " << r.worst_index << " fd " << r.worst_fd << " ad " << r.worst_ad;
}

TEST(Checkpoint, RoundTripPreservesWeightsAndMetadata) {
  const MooeModel<float> m(tiny());
  Checkpoint<float> ck;
  ck.model = m.config();
  ck.system = "dr";
  ck.normalization = {{0.1}, {2.0}};
  ck.condition = {{1.0, 2.0}, {0.5, 0.25}};
  ck.params = m.params();
  ck.meta["note"] = "x";
  const auto path = std::filesystem::temp_directory_path() / "imooe_model_ck.ckpt";
  save_checkpoint(ck, path);
  const auto back = load_checkpoint<float>(path);
  EXPECT_EQ(weight_hash(back.params), weight_hash(m.params()));
  EXPECT_EQ(back.normalization.std, ck.normalization.std);
  EXPECT_EQ(back.condition.mean, ck.condition.mean);
  EXPECT_EQ(back.meta.at("note"), "x");
  const auto restored = restore_model(back);
  const auto hist = random_tensor<float>({3, 1, 16, 16}, 30);
  EXPECT_EQ(restored.predict(hist, 2, {0, 0}, MaskUse::hard).storage(),
            m.predict(hist, 2, {0, 0}, MaskUse::hard).storage());
  const auto as_double = load_checkpoint<double>(path);
  EXPECT_EQ(as_double.params.value(0)[0], double(m.params().value(0)[0]));
  std::filesystem::remove(path);
}

TEST(Checkpoint, RefusesUnknownDerivativeOrdering) {
  Checkpoint<double> ck;
  ck.model = tiny();
  ck.params = MooeModel<double>(tiny()).params();
  ck.derivative_ordering = spectral::kDerivativeOrderingVersion + 1;
  const auto path = std::filesystem::temp_directory_path() / "imooe_model_order.ckpt";
  save_checkpoint(ck, path);
  EXPECT_THROW(load_checkpoint<double>(path), FormatError);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsGarbageAndMismatchedModel) {
  const auto path = std::filesystem::temp_directory_path() / "imooe_model_bad.ckpt";
  std::ofstream(path) << "not a checkpoint";
  EXPECT_THROW(load_checkpoint<double>(path), FormatError);
  Checkpoint<double> ck;
  ck.model = tiny();
  auto other = tiny();
  other.width = 4;
  ck.params = MooeModel<double>(other).params();
  EXPECT_THROW(restore_model(ck), FormatError);
  std::filesystem::remove(path);
}
