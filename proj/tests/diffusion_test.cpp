// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <regex>
#include <sstream>

#include "fgpaint/diffusion.hpp"
#include "fgpaint/errors.hpp"
#include "fgpaint/ops.hpp"
#include "fgpaint/tape.hpp"

namespace fgp {
namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.width = 32;
  c.heads = 2;
  c.adapter_width = 16;
  c.image_size = 32;
  c.latent_channels = 4;
  c.seed = 3;
  return c;
}

SceneSpec tiny_scene() {
  SceneSpec s;
  s.height = 32;
  s.width = 32;
  return s;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.steps = 3;
  t.batch_size = 4;
  t.warmup = 0;
  t.lr = 1e-3;
  t.vae_steps = 2;
  t.vae_batch = 4;
  t.seed = 11;
  return t;
}

double max_abs_delta(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, double(std::abs(a[i] - b[i])));
  return m;
}

// ---- schedule --------------------------------------------------------------

TEST(NoiseSchedule, LinearBetasAndInvariants) {
  NoiseSchedule s(100, 0.1, 20.0);
  EXPECT_EQ(s.steps(), 100);
  EXPECT_NEAR(s.beta(1), 0.001, 1e-15);
  EXPECT_NEAR(s.beta(100), 0.2, 1e-15);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
  for (int t = 1; t <= 100; ++t) {
    EXPECT_GT(s.beta(t), 0.0);
    EXPECT_LT(s.beta(t), 1.0);
    if (t > 1) {
      EXPECT_GE(s.beta(t), s.beta(t - 1));
    }
    EXPECT_NEAR(s.alpha_bar(t), s.alpha_bar(t - 1) * (1 - s.beta(t)), 1e-15);
  }
  EXPECT_LT(s.alpha_bar(100), s.alpha_bar(1));
  EXPECT_NEAR(s.posterior_variance(1), 0.0, 1e-15);
}

TEST(NoiseSchedule, Errors) {
  NoiseSchedule s(10, 0.1, 2.0);
  EXPECT_THROW(s.beta(0), ScheduleError);
  EXPECT_THROW(s.beta(11), ScheduleError);
  EXPECT_THROW(s.alpha_bar(-1), ScheduleError);
  EXPECT_THROW(NoiseSchedule(0, 0.1, 2.0), ScheduleError);
  EXPECT_THROW(NoiseSchedule(10, 0.0, 2.0), ScheduleError);
  EXPECT_THROW(NoiseSchedule(10, 5.0, 2.0), ScheduleError);
  EXPECT_THROW(NoiseSchedule(10, 0.1, 10.0), ScheduleError);
}

TEST(QSample, CleanEndpointAndZeroNoise) {
  NoiseSchedule s(100, 0.1, 20.0);
  Rng rng(1);
  Tensor x0 = randn({2, 3, 4, 4}, rng), eps = randn({2, 3, 4, 4}, rng);
  EXPECT_TRUE(bit_equal(q_sample(s, x0, {0, 0}, eps), x0));
  Tensor z = Tensor::zeros(x0.shape());
  Tensor xt = q_sample(s, x0, {10, 70}, z);
  for (std::int64_t i = 0; i < x0.numel(); ++i) {
    const int t = i < 48 ? 10 : 70;
    EXPECT_EQ(xt[i], static_cast<float>(std::sqrt(s.alpha_bar(t)) * x0[i]));
  }
  EXPECT_THROW(q_sample(s, x0, {1, 101}, eps), ScheduleError);
  EXPECT_THROW(q_sample(s, x0, {1}, eps), DimensionError);
}

TEST(QSample, MonteCarloVariance) {
  NoiseSchedule s(100, 0.1, 20.0);
  Rng rng(2);
  const int t = 30;
  Tensor x0 = Tensor::zeros({10000, 1});
  Tensor xt = q_sample(s, x0, std::vector<int>(10000, t), randn({10000, 1}, rng));
  double mean = 0, var = 0;
  for (float v : xt.data()) mean += v;
  mean /= 10000;
  for (float v : xt.data()) var += (v - mean) * (v - mean);
  var /= 10000;
  EXPECT_NEAR(var / (1 - s.alpha_bar(t)), 1.0, 0.05);
}

TEST(Posterior, NoisingConsistency) {
  NoiseSchedule s(100, 0.1, 20.0);
  Rng rng(3);
  Tensor x0 = randn({3, 4, 4, 4}, rng), eps = randn(x0.shape(), rng);
  const std::vector<int> t{1, 50, 100};
  Tensor xt = q_sample(s, x0, t, eps);
  Tensor rec = predict_x0(s, xt, t, eps);
  // t=100 has 1/sqrt(alpha_bar) ~ 27, so compare relative to that gain.
  for (std::int64_t i = 0; i < x0.numel(); ++i) EXPECT_NEAR(rec[i], x0[i], 1e-5 / std::sqrt(s.alpha_bar(t[i / 64])));
  Tensor m1 = posterior_mean(s, xt, rec, t), m2 = posterior_mean(s, xt, x0, t);
  for (std::int64_t i = 0; i < x0.numel(); ++i) EXPECT_NEAR(m1[i], m2[i], 1e-5);
  // At t=1 the posterior collapses onto x0.
  Tensor at1 = posterior_mean(s, xt, x0, {1, 1, 1});
  for (std::int64_t i = 0; i < x0.numel(); ++i) EXPECT_NEAR(at1[i], x0[i], 1e-6);
}

TEST(Posterior, MatchesGaussianProductOracle) {
  // Mean of N(x_{t-1}; sqrt(ab_{t-1}) x0, 1-ab_{t-1}) · N(x_t; sqrt(a_t) x_{t-1}, b_t).
  NoiseSchedule s(20, 0.1, 10.0);
  Tensor xt({1, 1}, {0.7f}), x0({1, 1}, {-0.3f});
  for (int t = 2; t <= 20; ++t) {
    const double p1 = 1.0 / (1 - s.alpha_bar(t - 1)), p2 = s.alpha(t) / s.beta(t);
    const double mean = (p1 * std::sqrt(s.alpha_bar(t - 1)) * -0.3 + std::sqrt(s.alpha(t)) / s.beta(t) * 0.7) / (p1 + p2);
    EXPECT_NEAR(posterior_mean(s, xt, x0, {t})[0], mean, 1e-6);
    EXPECT_NEAR(s.posterior_variance(t), 1.0 / (p1 + p2), 1e-12);
  }
}

// ---- loss ------------------------------------------------------------------

TEST(TrainingLoss, PerfectPredictorIsZero) {
  NoiseSchedule s(100, 0.1, 20.0);
  Rng rng(4);
  Tensor x0 = randn({2, 4, 4, 4}, rng);
  EXPECT_EQ(training_loss([](const NoiseDraw& d) { return d.eps; }, x0, s, rng).item(), 0.0f);
}

TEST(TrainingLoss, ZeroPredictorAveragesToOne) {
  NoiseSchedule s(100, 0.1, 20.0);
  Rng rng(5);
  Tensor x0 = randn({1, 4, 4, 4}, rng);
  double acc = 0;
  for (int i = 0; i < 1000; ++i)
    acc += training_loss([](const NoiseDraw& d) { return Tensor::zeros(d.eps.shape()); }, x0, s, rng).item();
  EXPECT_NEAR(acc / 1000, 1.0, 0.05);
}

TEST(TrainingLoss, NonFiniteIsNumericError) {
  NoiseSchedule s(10, 0.1, 2.0);
  Rng rng(6);
  Tensor x0 = Tensor::zeros({1, 2});
  auto bad = [](const NoiseDraw& d) { return Tensor::full(d.eps.shape(), std::nanf("")); };
  EXPECT_THROW(training_loss(bad, x0, s, rng), NumericError);
}

TEST(TrainingLoss, TimestepsUniformOverRange) {
  NoiseSchedule s(10, 0.1, 2.0);
  Rng rng(7);
  std::vector<int> hits(11, 0);
  for (int i = 0; i < 2000; ++i)
    for (int t : draw_noise(s, Tensor::zeros({5, 1}), rng).t) ++hits[t];
  EXPECT_EQ(hits[0], 0);
  for (int t = 1; t <= 10; ++t) EXPECT_NEAR(hits[t] / 10000.0, 0.1, 0.015);
}

// ---- sampling --------------------------------------------------------------

TEST(DdpmSample, SingleStepZeroModelIsAffineInNoise) {
  NoiseSchedule s(1, 0.1, 0.5);
  auto zero = [](const Tensor& x, int) { return Tensor::zeros(x.shape()); };
  Tensor out = ddpm_sample(zero, {2, 3}, s, 99);
  Rng rng(99);
  Tensor z = randn({2, 3}, rng);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(out[i], static_cast<float>(z[i] / std::sqrt(1 - 0.1)));
}

// With the exact noise of a point-mass data distribution, both update forms
// land on that point.
TEST(DdpmSample, OraclePredictorRecoversPointMass) {
  NoiseSchedule s(50, 0.1, 20.0);
  const float target = 0.75f;
  auto oracle = [&](const Tensor& x, int t) {
    Tensor e = Tensor::zeros(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i)
      e.mutable_data()[i] = float((x[i] - std::sqrt(s.alpha_bar(t)) * target) / std::sqrt(1 - s.alpha_bar(t)));
    return e;
  };
  for (double clip : {0.0, 1.0, 6.0}) {
    Tensor out = ddpm_sample(oracle, {4, 8}, s, 3, clip);
    for (std::int64_t i = 0; i < out.numel(); ++i) EXPECT_NEAR(out[i], target, 1e-3) << clip;
  }
}

TEST(DdpmSample, LooseClipMatchesPlainUpdate) {
  NoiseSchedule s(20, 0.1, 10.0);
  auto shrink = [](const Tensor& x, int) { return mul_const(x, 0.9f); };
  Tensor a = ddpm_sample(shrink, {3, 5}, s, 11), b = ddpm_sample(shrink, {3, 5}, s, 11, 1e30);
  for (std::int64_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-4 * (1 + std::fabs(a[i])));
}

// A zero predictor grows x by 1/sqrt(alpha_bar(T)) ~ 220; the clipped
// sampler's last step returns the clamped x0, so output stays in bounds.
TEST(DdpmSample, ClipBoundsDriftingPredictor) {
  NoiseSchedule s(100, 0.1, 20.0);
  auto zero = [](const Tensor& x, int) { return Tensor::zeros(x.shape()); };
  Tensor plain = ddpm_sample(zero, {2, 64}, s, 5), clipped = ddpm_sample(zero, {2, 64}, s, 5, 3.0);
  double peak = 0;
  for (std::int64_t i = 0; i < plain.numel(); ++i) {
    peak = std::max(peak, double(std::fabs(plain[i])));
    EXPECT_LE(std::fabs(clipped[i]), 3.0f);
  }
  EXPECT_GT(peak, 50.0);
  EXPECT_THROW(ddpm_sample(zero, {1}, s, 5, -1.0), ScheduleError);
}

TEST(DdpmSample, DeterministicForSeed) {
  ModelConfig cfg = tiny_model();
  Model m(cfg);
  NoiseSchedule s(5, 0.1, 2.0);
  auto samples = gen_dataset(1, 2, tiny_scene());
  std::vector<const Sample*> ptrs{&samples[0], &samples[1]};
  auto f = m.encode_subject(make_subject_batch(ptrs));
  Tensor text = Tensor::zeros({2, 10});
  Tensor a = ddpm_sample(m, text, &f, s, 7), b = ddpm_sample(m, text, &f, s, 7), c = ddpm_sample(m, text, &f, s, 8);
  EXPECT_EQ(a.shape(), (Shape{2, 4, 8, 8}));
  EXPECT_TRUE(bit_equal(a, b));
  EXPECT_FALSE(bit_equal(a, c));
  ForwardTrace trace;
  Tensor d = ddpm_sample(m, text, &f, s, 7, &trace);
  EXPECT_TRUE(bit_equal(a, d));
  ASSERT_EQ(trace.subject_maps.size(), 8u);
  // Summed over 5 steps, each row of each map sums to 5.
  const auto& map = trace.subject_maps[0];
  double row = 0;
  for (std::int64_t j = 0; j < map.dim(3); ++j) row += map[j];
  EXPECT_NEAR(row, 5.0, 1e-4);
}

// ---- compositing -----------------------------------------------------------

TEST(Composite, FullEmptyAndRandomMasks) {
  Rng rng(8);
  Tensor gen = rand_uniform({3, 6, 5}, rng, 0, 1), subj = rand_uniform({3, 6, 5}, rng, 0, 1);
  EXPECT_TRUE(bit_equal(composite_foreground(gen, subj, Tensor::full({6, 5}, 1.0f)), subj));
  EXPECT_TRUE(bit_equal(composite_foreground(gen, subj, Tensor::zeros({6, 5})), gen));
  Tensor m = Tensor::zeros({6, 5});
  for (auto& v : m.mutable_data()) v = rng.uniform() < 0.5 ? 1.0f : 0.0f;
  Tensor out = composite_foreground(gen, subj, m);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 30; ++i) EXPECT_EQ(out[c * 30 + i], m[i] == 1.0f ? subj[c * 30 + i] : gen[c * 30 + i]);
}

TEST(Composite, BatchedAndShapeErrors) {
  Rng rng(9);
  Tensor gen = rand_uniform({2, 3, 4, 4}, rng, 0, 1), subj = rand_uniform({2, 3, 4, 4}, rng, 0, 1);
  Tensor m = Tensor::zeros({2, 4, 4});
  m.mutable_data()[16 + 5] = 1.0f;
  Tensor out = composite_foreground(gen, subj, m);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(out[(3 + c) * 16 + 5], subj[(3 + c) * 16 + 5]);
  EXPECT_EQ(out[5], gen[5]);
  EXPECT_THROW(composite_foreground(gen, rand_uniform({2, 3, 4, 5}, rng, 0, 1), m), DimensionError);
  EXPECT_THROW(composite_foreground(gen, subj, Tensor::zeros({4, 4})), DimensionError);
  EXPECT_THROW(composite_foreground(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 4, 4}), Tensor::zeros({4, 4})),
               DimensionError);
}

// ---- optimizer -------------------------------------------------------------

TEST(Adam, MomentumFreeStepMatchesHandFormula) {
  Tensor w({3}, {1.0f, -2.0f, 0.5f});
  w.set_requires_grad(true);
  Adam::Options o;
  o.lr = 0.1;
  Adam adam({w}, o);
  const float g[3] = {0.5f, -4.0f, 0.0f};
  for (int step = 0; step < 2; ++step) {
    std::copy(g, g + 3, w.impl()->grad_buffer().begin());
    const float before[3] = {w[0], w[1], w[2]};
    adam.step();
    // With a constant gradient, v_hat == g^2 at every step.
    for (int i = 0; i < 3; ++i) {
      const double expect = g[i] == 0 ? before[i] : before[i] - 0.1 * g[i] / (std::abs(g[i]) + 1e-8);
      EXPECT_NEAR(w[i], expect, 1e-6);
    }
  }
}

TEST(Adam, WarmupAndClipping) {
  Tensor w({2}, {0.0f, 0.0f});
  w.set_requires_grad(true);
  Adam::Options o;
  o.lr = 1e-4;
  o.warmup = 1000;
  o.grad_clip = 1.0;
  Adam adam({w}, o);
  EXPECT_DOUBLE_EQ(adam.lr_at(0), 1e-7);
  EXPECT_DOUBLE_EQ(adam.lr_at(499), 5e-5);
  EXPECT_DOUBLE_EQ(adam.lr_at(1000), 1e-4);
  EXPECT_DOUBLE_EQ(adam.lr_at(5000), 1e-4);
  auto gb = w.impl()->grad_buffer();
  gb[0] = 3.0f;
  gb[1] = 4.0f;
  EXPECT_DOUBLE_EQ(adam.step(), 5.0);
  EXPECT_EQ(adam.steps_taken(), 1);
  gb[0] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(adam.step(), NumericError);
}

TEST(Adam, MinimizesQuadratic) {
  Tensor w({4}, {2.0f, -1.0f, 0.5f, 3.0f});
  w.set_requires_grad(true);
  Adam::Options o;
  o.lr = 0.05;
  Adam adam({w}, o);
  for (int i = 0; i < 400; ++i) {
    w.zero_grad();
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(sum(mul(w, w)));
    adam.step();
  }
  for (float v : w.data()) EXPECT_LT(std::abs(v), 0.1);
}

// ---- training --------------------------------------------------------------

TEST(Training, FrozenBaseLeavesBaseUntouched) {
  ModelConfig cfg = tiny_model();
  Model m(cfg);
  auto samples = gen_dataset(2, 8, tiny_scene());
  TrainConfig tc = tiny_train();
  tc.freeze_base = true;
  ParamStore before = m.params().clone();
  train(m, samples, tc, nullptr);
  double base = 0, vae = 0, adapter = 0, shape = 0, fusion = 0;
  for (const auto& p : m.params().params()) {
    const double d = max_abs_delta(p.value, before.get(p.name));
    switch (p.group) {
      case ParamGroup::Base: base = std::max(base, d); break;
      case ParamGroup::Vae: vae = std::max(vae, d); break;
      case ParamGroup::Adapter: adapter = std::max(adapter, d); break;
      case ParamGroup::ShapeEncoder: shape = std::max(shape, d); break;
      case ParamGroup::Fusion: fusion = std::max(fusion, d); break;
    }
  }
  EXPECT_EQ(base, 0.0);
  EXPECT_EQ(vae, 0.0);
  EXPECT_GT(adapter, 0.0);
  EXPECT_GT(shape, 0.0);
  EXPECT_GT(fusion, 0.0);
}

TEST(Training, JointTrainingUpdatesBaseAndLogs) {
  Model m(tiny_model());
  auto samples = gen_dataset(3, 8, tiny_scene());
  ParamStore before = m.params().clone();
  std::ostringstream log;
  TrainLog r = train(m, samples, tiny_train(), &log);
  ASSERT_EQ(r.losses.size(), 3u);
  EXPECT_GT(r.gate_means.back(), 0.0);
  EXPECT_GT(max_abs_delta(m.params().get("base.patch_in.w"), before.get("base.patch_in.w")), 0.0);
  std::istringstream lines(log.str());
  std::string line;
  int n = 0;
  const std::regex fmt(R"(step=\d+ loss=[0-9.]+ gate_mean=[0-9.e+-]+ wall_time=[0-9.]+)");
  while (std::getline(lines, line)) {
    EXPECT_TRUE(std::regex_match(line, fmt)) << line;
    ++n;
  }
  EXPECT_EQ(n, 3);
}

TEST(Training, DeterministicGivenSeeds) {
  auto samples = gen_dataset(4, 8, tiny_scene());
  Model a(tiny_model()), b(tiny_model());
  auto ra = train(a, samples, tiny_train(), nullptr);
  auto rb = train(b, samples, tiny_train(), nullptr);
  EXPECT_EQ(ra.losses, rb.losses);
  for (std::size_t i = 0; i < a.params().params().size(); ++i)
    EXPECT_TRUE(bit_equal(a.params().params()[i].value, b.params().params()[i].value)) << a.params().params()[i].name;
}

TEST(Training, MultiAspectBatches) {
  ModelConfig cfg = tiny_model();
  cfg.image_size = 64;
  Model m(cfg);
  auto samples = gen_dataset(5, 6, SceneSpec{});
  TrainConfig tc = tiny_train();
  tc.multi_aspect = true;
  tc.batch_size = 2;
  tc.steps = 4;
  std::ostringstream log;
  auto r = train(m, samples, tc, &log);
  EXPECT_EQ(r.losses.size(), 4u);
  for (double l : r.losses) EXPECT_TRUE(std::isfinite(l));
}

TEST(Training, VaePretrainingReducesLossAndFreezes) {
  Model m(tiny_model());
  auto samples = gen_dataset(6, 16, tiny_scene());
  TrainConfig tc = tiny_train();
  tc.vae_steps = 80;
  auto r = pretrain_vae(m, samples, tc, nullptr);
  EXPECT_LT(r.final_loss, 0.5 * r.first_loss);
  EXPECT_TRUE(m.params().frozen(ParamGroup::Vae));
  for (float v : m.vae().scale().data()) EXPECT_GT(v, 0.0f);
  // Normalized latents of the fitting set are centered.
  std::vector<const Sample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  TrainingSet set = prepare_training_set(m, samples);
  double mean = 0;
  std::int64_t n = 0;
  for (const auto& l : set.latents)
    for (float v : l.data()) {
      mean += v;
      ++n;
    }
  EXPECT_NEAR(mean / double(n), 0.0, 1e-3);
}

TEST(Training, CopyGroupSharesAutoencoder) {
  Model a(tiny_model());
  ModelConfig other = tiny_model();
  other.anchor = false;
  other.seed = 99;
  Model b(other);
  Rng rng(1);
  for (auto& p : a.params().params())
    for (auto& v : p.value.mutable_data()) v = static_cast<float>(rng.uniform());
  copy_group(a.params(), b.params(), ParamGroup::Vae);
  for (const auto& p : b.params().params()) {
    if (p.group == ParamGroup::Vae) {
      EXPECT_TRUE(bit_equal(p.value, a.params().get(p.name)));
    }
  }
  EXPECT_FALSE(bit_equal(b.params().get("base.patch_in.w"), a.params().get("base.patch_in.w")));
}

TEST(Training, ModelVariantsShareBaseInitialization) {
  ModelConfig cfg;
  Model self(cfg);
  cfg.anchor = false;
  Model norope(cfg);
  cfg.anchor = true;
  cfg.subject_encoder = SubjectEncoderKind::VaeOnly;
  Model vae_only(cfg);
  for (const auto& p : self.params().params()) {
    if (p.group != ParamGroup::Base && p.group != ParamGroup::Vae) continue;
    EXPECT_TRUE(bit_equal(p.value, norope.params().get(p.name))) << p.name;
    EXPECT_TRUE(bit_equal(p.value, vae_only.params().get(p.name))) << p.name;
  }
}

}  // namespace
}  // namespace fgp
