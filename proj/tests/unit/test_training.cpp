#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "../oracles/fd_gradient_check.hpp"
#include "imooe/datasets/io.hpp"
#include "imooe/training/trainer.hpp"

using namespace imooe;
using namespace imooe::training;

namespace {

const datasets::Dataset& tiny_data() {
  static const datasets::Dataset d = [] {
    datasets::GenerateOptions opt;
    opt.system = datasets::SystemId::DR;
    opt.envs = 2;
    opt.trajectories = 2;
    opt.resolution = 16;
    opt.seed = 4;
    return datasets::generate_dataset(opt);
  }();
  return d;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 2;
  c.lr = 1e-3;
  c.seed = 9;
  c.workers = 1;
  c.rollout_steps = 3;
  c.model.layers = 1;
  c.model.width = 8;
  c.model.modes = 4;
  c.model.head_width = 8;
  c.finalize();
  return c;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("imooe_train_" + name);
  std::filesystem::remove_all(p);
  return p;
}

template <class Real>
oracles::GradCheckResult objective_check(Trainer<Real>& tr, Trainer<double>& ref, std::size_t epoch) {
  const auto batch = tr.epoch_batches(epoch)[0];
  auto grads = tr.model().params().zeros_like();
  tr.batch_gradient(batch, epoch, grads);
  const auto start = tr.model().params().flatten();
  auto loss = [&](const std::vector<double>& flat) {
    ref.model().params().unflatten(flat);
    return ref.batch_loss(batch, epoch).total;
  };
  std::vector<std::size_t> probes;
  std::size_t off = 0;
  for (std::size_t i = 0; i < tr.model().params().size(); ++i) {
    probes.push_back(off + tr.model().params().value(i).size() / 3);
    off += tr.model().params().value(i).size();
  }
  return oracles::fd_gradient_check(loss, start, ad::flatten(grads), 1e-6, probes);
}

}  // namespace

TEST(Training, ZeroEpochsReturnsInitialisedModel) {
  auto cfg = tiny_config();
  cfg.epochs = 0;
  cfg.finalize();
  const auto r = train<float>(cfg, tiny_data());
  EXPECT_TRUE(r.history.empty());
  Trainer<float> fresh(cfg, tiny_data());
  EXPECT_EQ(model::weight_hash(r.checkpoint.params), model::weight_hash(fresh.model().params()));
  EXPECT_EQ(r.checkpoint.meta.at("train_state").at("epoch"), 0);
}

TEST(Training, ResumeReproducesUninterruptedRunAtF64) {
  auto cfg = tiny_config();
  cfg.precision = Precision::f64;
  cfg.loss.schedule.mode = objectives::ScheduleMode::fixed;
  const auto full = train<double>(cfg, tiny_data());

  Trainer<double> first(cfg, tiny_data());
  first.run_epoch();
  const auto dir = scratch("resume");
  std::filesystem::create_directories(dir);
  model::save_checkpoint(first.checkpoint(), dir / "mid.ckpt");
  const auto ck = model::load_checkpoint<double>(dir / "mid.ckpt");
  Trainer<double> resumed(cfg, tiny_data(), {}, &ck);
  EXPECT_EQ(resumed.epoch(), 1u);
  std::vector<StepRecord> tail;
  while (!resumed.done()) {
    auto recs = resumed.run_epoch();
    tail.insert(tail.end(), recs.begin(), recs.end());
  }
  const std::size_t offset = full.history.size() - tail.size();
  ASSERT_GT(tail.size(), 0u);
  for (std::size_t i = 0; i < tail.size(); ++i) {
    EXPECT_EQ(tail[i].step, full.history[offset + i].step);
    EXPECT_NEAR(tail[i].loss.total, full.history[offset + i].loss.total, 1e-12);
  }
  EXPECT_EQ(model::weight_hash(resumed.checkpoint().params), model::weight_hash(full.checkpoint.params));
  std::filesystem::remove_all(dir);
}

TEST(Training, EveryEnvironmentAppearsInEveryBatch) {
  auto cfg = tiny_config();
  Trainer<float> tr(cfg, tiny_data());
  for (std::size_t e = 0; e < 3; ++e) {
    std::set<std::size_t> seen_samples;
    for (const auto& batch : tr.epoch_batches(e)) {
      std::set<std::size_t> envs;
      for (auto i : batch) {
        envs.insert(tr.data().sample_env[i]);
        seen_samples.insert(i);
      }
      EXPECT_EQ(envs.size(), 2u);
    }
    EXPECT_EQ(seen_samples.size(), tr.data().samples.size());
  }
  EXPECT_NE(tr.epoch_batches(0), tr.epoch_batches(1));
}

TEST(Training, NonFiniteLossAbortsWithLocation) {
  auto cfg = tiny_config();
  Trainer<float> tr(cfg, tiny_data());
  auto& p = tr.model().params();
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p.name(i) == "head0.out.b") p.value(i)[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    tr.run_epoch();
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("last good checkpoint"), std::string::npos) << msg;
  }
}

TEST(Training, FullObjectiveGradientMatchesFiniteDifferenceF64) {
  auto cfg = tiny_config();
  cfg.precision = Precision::f64;
  cfg.partition = objectives::PartitionMode::by_env_and_step;
  cfg.loss.inv_max = 0.5;
  cfg.loss.mask = 0.05;
  cfg.loss.schedule.mode = objectives::ScheduleMode::fixed;
  Trainer<double> tr(cfg, tiny_data()), ref(cfg, tiny_data());
  const auto r = objective_check(tr, ref, 0);
  EXPECT_LE(r.max_rel_error, 1e-5) << "idx " << r.worst_index << " fd " << r.worst_fd << " ad " << r.worst_ad;
}

TEST(Training, FullObjectiveGradientMatchesFiniteDifferenceF32) {
  auto cfg = tiny_config();
  cfg.loss.inv_max = 0.5;
  cfg.loss.mask = 0.05;
  cfg.loss.schedule.mode = objectives::ScheduleMode::fixed;
  Trainer<float> tr(cfg, tiny_data());
  Trainer<double> ref(cfg, tiny_data());
  const auto r = objective_check(tr, ref, 0);
  EXPECT_LE(r.max_rel_error, 1e-3) << "idx " << r.worst_index << " fd " << r.worst_fd << " ad " << r.worst_ad;
}

TEST(Training, GradientIndependentOfWorkerCount) {
  auto cfg = tiny_config();
  cfg.loss.schedule.mode = objectives::ScheduleMode::fixed;
  Trainer<float> one(cfg, tiny_data());
  cfg.workers = 3;
  Trainer<float> three(cfg, tiny_data());
  const auto batch = one.epoch_batches(0)[0];
  auto g1 = one.model().params().zeros_like();
  auto g3 = three.model().params().zeros_like();
  const auto l1 = one.batch_gradient(batch, 0, g1);
  const auto l3 = three.batch_gradient(batch, 0, g3);
  EXPECT_EQ(l1.total, l3.total);
  EXPECT_EQ(ad::flatten(g1), ad::flatten(g3));
}

TEST(Training, WritesHistoryAndCheckpoints) {
  auto cfg = tiny_config();
  cfg.epochs = 2;
  cfg.checkpoint_every = 1;
  cfg.finalize();
  const auto dir = scratch("outputs");
  const auto r = train<float>(cfg, tiny_data(), dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "model.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "last.ckpt"));
  std::ifstream is(dir / "history.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(is, line); ++lines) {
    const auto j = nlohmann::json::parse(line);
    for (const char* k : {"epoch", "step", "pred", "inv", "freq", "mask", "lambda_inv", "total"})
      EXPECT_TRUE(j.contains(k)) << k;
  }
  EXPECT_EQ(lines, r.history.size());
  const auto ck = model::load_checkpoint<float>(dir / "model.ckpt");
  EXPECT_EQ(model::weight_hash(ck.params), model::weight_hash(r.checkpoint.params));
  std::filesystem::remove_all(dir);
}

TEST(Training, ValidateLeavesWeightsUntouchedAndCoversEnvs) {
  auto cfg = tiny_config();
  cfg.epochs = 1;
  cfg.finalize();
  const auto r = train<float>(cfg, tiny_data());
  const auto before = model::weight_hash(r.checkpoint.params);
  const auto rep = validate(r.checkpoint, tiny_data());
  EXPECT_EQ(model::weight_hash(r.checkpoint.params), before);
  EXPECT_EQ(rep.envs.size(), 2u);
  EXPECT_EQ(rep.model_tag, model::hex64(before));
  EXPECT_EQ(rep.steps, 11u);
}

TEST(Training, ConfigParsing) {
  const auto c = train_config_from_json({{"epochs", 200}, {"model", {{"experts", 3}}}, {"partition", "by_env_and_step"}});
  EXPECT_EQ(c.model.experts, 3u);
  EXPECT_EQ(c.loss.schedule.warmup_end, 70u);
  EXPECT_EQ(c.loss.schedule.total, 200u);
  EXPECT_EQ(c.partition, objectives::PartitionMode::by_env_and_step);
  EXPECT_THROW(train_config_from_json({{"epochz", 1}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"loss", {{"lambda", 1}}}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"precision", "f16"}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"batch_size", 0}}), ConfigError);
  const auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Training, ZeroStdDataRejected) {
  auto d = tiny_data();
  d.manifest.normalization.std[0] = 0.0;
  EXPECT_THROW(Trainer<float>(tiny_config(), d), ConfigError);
}
