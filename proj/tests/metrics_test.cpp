// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <regex>
#include <sstream>

#include "fgpaint/diffusion.hpp"
#include "fgpaint/errors.hpp"
#include "fgpaint/metrics.hpp"

namespace fgp {
namespace {

Tensor mask_from(int h, int w, const std::vector<std::pair<int, int>>& on) {
  Tensor m = Tensor::zeros({h, w});
  for (auto [y, x] : on) m.mutable_data()[static_cast<std::size_t>(y * w + x)] = 1.0f;
  return m;
}

Tensor box(int h, int w, int y0, int x0, int y1, int x1) {
  std::vector<std::pair<int, int>> on;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) on.push_back({y, x});
  return mask_from(h, w, on);
}

Tensor random_mask(int h, int w, double p, Rng& rng) {
  Tensor m = Tensor::zeros({h, w});
  for (auto& v : m.mutable_data()) v = rng.uniform() < p ? 1.0f : 0.0f;
  return m;
}

// Per-pixel brute force straight from the definition.
double oer_oracle(const Tensor& s, const Tensor& g) {
  double num = 0, den = 0;
  for (std::int64_t i = 0; i < s.numel(); ++i) {
    num += std::max(0.0, double(s[i]) - double(g[i]));
    den += g[i];
  }
  return num / den;
}

Tensor upsample2(const Tensor& m) {
  const auto h = m.dim(0), w = m.dim(1);
  Tensor out = Tensor::zeros({2 * h, 2 * w});
  for (std::int64_t y = 0; y < 2 * h; ++y)
    for (std::int64_t x = 0; x < 2 * w; ++x)
      out.mutable_data()[static_cast<std::size_t>(y * 2 * w + x)] = m[(y / 2) * w + x / 2];
  return out;
}

std::int64_t count(const Tensor& m) {
  std::int64_t n = 0;
  for (float v : m.data()) n += v != 0.0f;
  return n;
}

// ---- OER -------------------------------------------------------------------

TEST(Oer, IdenticalMasksGiveZero) {
  Tensor g = box(16, 16, 3, 4, 9, 12);
  EXPECT_EQ(oer(g, g), 0.0);
}

TEST(Oer, ShrinkageOnlyGivesZero) {
  Tensor g = box(16, 16, 2, 2, 12, 12);
  Tensor s = box(16, 16, 4, 4, 8, 8);
  EXPECT_EQ(oer(s, g), 0.0);
  EXPECT_GT(coverage(s, g), 0.0);
}

TEST(Oer, TwentyFiveExtraPixelsOnHundred) {
  Tensor g = box(20, 20, 0, 0, 10, 10);
  Tensor s = g.detach();
  for (int x = 0; x < 20 && count(s) < 125; ++x)
    for (int y = 10; y < 20 && count(s) < 125; ++y) s.mutable_data()[static_cast<std::size_t>(y * 20 + x)] = 1.0f;
  ASSERT_EQ(count(g), 100);
  ASSERT_EQ(count(s), 125);
  EXPECT_EQ(oer(s, g), 0.25);
  EXPECT_EQ(coverage(s, g), 0.0);
}

TEST(Oer, MatchesBruteForceOnRandomPairs) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = int(rng.uniform_int(1, 40)), w = int(rng.uniform_int(1, 40));
    Tensor g = random_mask(h, w, rng.uniform(0.05, 0.9), rng);
    if (count(g) == 0) g.mutable_data()[0] = 1.0f;
    Tensor s = random_mask(h, w, rng.uniform(0.0, 1.0), rng);
    EXPECT_EQ(oer(s, g), oer_oracle(s, g)) << "trial " << trial;
    // Coverage is the mirror statistic.
    double miss = 0;
    for (std::int64_t i = 0; i < g.numel(); ++i) miss += std::max(0.0, double(g[i]) - double(s[i]));
    EXPECT_EQ(coverage(s, g), miss / double(count(g)));
  }
}

TEST(Oer, ScaleFreeUnderNearestUpsampling) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor g = random_mask(12, 9, 0.4, rng);
    if (count(g) == 0) g.mutable_data()[3] = 1.0f;
    Tensor s = random_mask(12, 9, 0.5, rng);
    EXPECT_EQ(oer(upsample2(s), upsample2(g)), oer(s, g));
    EXPECT_EQ(coverage(upsample2(s), upsample2(g)), coverage(s, g));
  }
}

TEST(Oer, UnboundedAbove) {
  Tensor g = box(10, 10, 0, 0, 2, 2);
  Tensor s = box(10, 10, 0, 0, 10, 10);
  EXPECT_EQ(oer(s, g), 24.0);
}

TEST(Oer, Errors) {
  Tensor g = Tensor::zeros({4, 4});
  EXPECT_THROW(oer(box(4, 4, 0, 0, 2, 2), g), MetricError);
  EXPECT_THROW(coverage(box(4, 4, 0, 0, 2, 2), g), MetricError);
  EXPECT_THROW(oer(box(4, 5, 0, 0, 2, 2), box(4, 4, 0, 0, 2, 2)), DimensionError);
  Tensor half = Tensor::full({4, 4}, 0.5f);
  EXPECT_THROW(oer(half, box(4, 4, 0, 0, 2, 2)), MetricError);
}

// ---- proxy segmenter ----------------------------------------------------------

Tensor gray_image(const Tensor& lum) {
  const auto h = lum.dim(0), w = lum.dim(1);
  Tensor img = Tensor::zeros({3, h, w});
  for (int c = 0; c < 3; ++c)
    for (std::int64_t i = 0; i < h * w; ++i) img.mutable_data()[static_cast<std::size_t>(c * h * w + i)] = lum[i];
  return img;
}

TEST(GeneratedMask, AllBackgroundIsFlaggedEmpty) {
  SegmentResult r = generated_mask(Tensor::full({3, 8, 8}, 0.2f));
  EXPECT_TRUE(r.empty);
  EXPECT_EQ(count(r.mask), 0);
}

TEST(GeneratedMask, KeepsLargestFourConnectedComponent) {
  // A 3x3 block and a diagonal chain of 5 pixels; diagonals are not 4-connected.
  Tensor chain = mask_from(10, 10, {{5, 5}, {6, 5}, {6, 6}, {7, 6}, {7, 7}});
  Tensor both = box(10, 10, 0, 0, 3, 3);
  for (std::int64_t i = 0; i < 100; ++i)
    if (chain[i] != 0) both.mutable_data()[static_cast<std::size_t>(i)] = 1;
  SegmentResult r = generated_mask(gray_image(both));
  EXPECT_FALSE(r.empty);
  EXPECT_TRUE(bit_equal(r.mask, box(10, 10, 0, 0, 3, 3)));

  // Ties go to the component met first in raster order.
  Tensor tie = box(6, 6, 4, 4, 6, 6);
  tie.mutable_data()[0] = tie.mutable_data()[1] = tie.mutable_data()[6] = tie.mutable_data()[7] = 1;
  EXPECT_TRUE(bit_equal(generated_mask(gray_image(tie)).mask, box(6, 6, 0, 0, 2, 2)));
}

TEST(GeneratedMask, ThresholdSweepIsMonotone) {
  Rng rng(31);
  Tensor img = rand_uniform({3, 24, 24}, rng, 0.0f, 1.0f);
  std::int64_t prev = count(generated_mask(img, 0.0f).mask);
  for (int i = 1; i <= 20; ++i) {
    const std::int64_t n = count(generated_mask(img, 0.05f * float(i)).mask);
    EXPECT_LE(n, prev) << "threshold " << 0.05 * i;
    prev = n;
  }
}

bool on_boundary(const Tensor& m, int y, int x) {
  const int h = int(m.dim(0)), w = int(m.dim(1));
  for (auto [dy, dx] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
    const int yy = y + dy, xx = x + dx;
    if (yy < 0 || yy >= h || xx < 0 || xx >= w || m[yy * w + xx] == 0.0f) return true;
  }
  return false;
}

TEST(GeneratedMask, CompositeContainsGroundTruthUpToBoundary) {
  SceneSpec spec;
  auto samples = gen_dataset(900, 24, spec);
  for (const auto& s : samples) {
    // Background-only generation with the subject pasted back.
    Tensor gen = Tensor::zeros(s.x0.shape());
    auto d = gen.mutable_data();
    const auto plane = std::size_t(s.height() * s.width());
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < plane; ++i) d[c * plane + i] = s.cond.m[std::int64_t(i)] ? 0.1f : s.x0[std::int64_t(c * plane + i)];
    Tensor fin = composite_foreground(gen, s.cond.I, s.cond.m);
    SegmentResult r = generated_mask(fin);
    ASSERT_FALSE(r.empty) << s.id;
    for (int y = 0; y < s.height(); ++y)
      for (int x = 0; x < s.width(); ++x) {
        const std::int64_t i = y * s.width() + x;
        if (s.cond.m[i] != 0.0f && r.mask[i] == 0.0f) {
          EXPECT_TRUE(on_boundary(s.cond.m, y, x)) << s.id << " misses interior pixel " << y << "," << x;
        }
      }
    EXPECT_EQ(oer(r.mask, s.cond.m), 0.0) << s.id;
  }
}

// ---- foreground L2 -----------------------------------------------------------

TEST(ForegroundL2, IdentityIsZero) {
  Rng rng(3);
  Tensor a = rand_uniform({3, 8, 8}, rng, 0.0f, 1.0f);
  EXPECT_EQ(foreground_l2(a, a, box(8, 8, 1, 1, 5, 5)), 0.0);
}

TEST(ForegroundL2, ConstantOffsetInsideMask) {
  Rng rng(4);
  Tensor ref = rand_uniform({3, 8, 8}, rng, 0.0f, 0.5f);
  Tensor m = box(8, 8, 2, 2, 6, 7);
  Tensor fin = ref.detach();
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 64; ++i) {
      auto& v = fin.mutable_data()[static_cast<std::size_t>(c * 64 + i)];
      v = m[i] != 0 ? v + 0.1f : 5.0f;  // outside the mask is ignored
    }
  EXPECT_NEAR(foreground_l2(fin, ref, m), 0.01, 1e-7);
}

TEST(ForegroundL2, ExactlyZeroAfterCompositing) {
  Rng rng(5);
  auto samples = gen_dataset(77, 6, SceneSpec{});
  for (const auto& s : samples) {
    Tensor gen = rand_uniform(s.x0.shape(), rng, 0.0f, 1.0f);
    EXPECT_EQ(foreground_l2(composite_foreground(gen, s.cond.I, s.cond.m), s.cond.I, s.cond.m), 0.0);
  }
}

TEST(ForegroundL2, Errors) {
  Tensor a = Tensor::zeros({3, 4, 4});
  EXPECT_THROW(foreground_l2(a, a, Tensor::zeros({4, 4})), MetricError);
  EXPECT_THROW(foreground_l2(a, Tensor::zeros({3, 4, 5}), box(4, 4, 0, 0, 1, 1)), DimensionError);
  EXPECT_THROW(foreground_l2(a, a, box(4, 5, 0, 0, 1, 1)), DimensionError);
}

// ---- attention concentration -------------------------------------------------

TEST(MaskToGrid, HalfCoverageRule) {
  // 4x4 pixels -> 2x2 cells of 2x2 pixels.
  Tensor m = mask_from(4, 4, {{0, 0}, {0, 1}, {0, 2}, {2, 2}, {2, 3}, {3, 2}, {3, 3}});
  Tensor g = mask_to_grid(m, 2, 2);
  EXPECT_EQ(g[0], 1.0f);  // 2 of 4
  EXPECT_EQ(g[1], 0.0f);  // 1 of 4
  EXPECT_EQ(g[2], 0.0f);
  EXPECT_EQ(g[3], 1.0f);
  EXPECT_THROW(mask_to_grid(m, 3, 2), DimensionError);
}

Tensor uniform_map(int b, int heads, int n) { return Tensor::full({b, heads, n, n}, 1.0f / float(n)); }

TEST(AttentionConcentration, UniformMapHalfMaskIsHalf) {
  Tensor grid = box(4, 4, 0, 0, 2, 4);
  EXPECT_DOUBLE_EQ(attention_concentration({uniform_map(1, 2, 16)}, grid), 0.5);
}

TEST(AttentionConcentration, DeltaOntoMaskIsOne) {
  Tensor grid = box(4, 4, 1, 1, 3, 3);
  Tensor map = Tensor::zeros({1, 1, 16, 16});
  for (int q = 0; q < 16; ++q) map.mutable_data()[static_cast<std::size_t>(q * 16 + 5)] = 1.0f;
  EXPECT_DOUBLE_EQ(attention_concentration({map}, grid), 1.0);
}

TEST(AttentionConcentration, AveragesHeadsAndSkipsDetachedBlocks) {
  Tensor grid = box(2, 2, 0, 0, 1, 2);  // cells 0, 1
  Tensor map = Tensor::zeros({1, 2, 4, 4});
  auto d = map.mutable_data();
  for (int q = 0; q < 4; ++q) {
    d[static_cast<std::size_t>(q * 4 + 0)] = 1.0f;             // head 0: all on cell 0
    d[static_cast<std::size_t>(16 + q * 4 + 3)] = 0.5f;        // head 1: half outside
    d[static_cast<std::size_t>(16 + q * 4 + 1)] = 0.5f;
  }
  EXPECT_DOUBLE_EQ(attention_concentration({Tensor(), map, Tensor()}, grid), 0.75);
  // Mass on non-subject keys (mm flavor rows do not sum to one) is not counted.
  Tensor scaled = map.detach();
  for (auto& v : scaled.mutable_data()) v *= 0.3f;
  EXPECT_DOUBLE_EQ(attention_concentration({scaled}, grid), 0.75);
}

TEST(AttentionConcentration, Errors) {
  EXPECT_THROW(attention_concentration({uniform_map(1, 1, 16)}, box(3, 3, 0, 0, 1, 1)), DimensionError);
  EXPECT_THROW(attention_concentration({uniform_map(1, 1, 4)}, Tensor::zeros({2, 2})), MetricError);
  EXPECT_THROW(attention_concentration({Tensor()}, box(2, 2, 0, 0, 1, 1)), MetricError);
}

// ---- report and evaluation ----------------------------------------------------

RunConfig tiny_run() {
  RunConfig c;
  c.model.width = 32;
  c.model.heads = 2;
  c.model.adapter_width = 16;
  c.model.image_size = 32;
  c.model.latent_channels = 4;
  c.model.seed = 3;
  c.train.timesteps = 25;
  c.eval.seed = 99;
  return c;
}

SceneSpec tiny_scene() {
  SceneSpec s;
  s.height = 32;
  s.width = 32;
  return s;
}

TEST(EvalReport, AggregatesAreExactMeans) {
  EvalReport r;
  r.config_hash = "abc";
  r.records = {{"a", 0.5, 0.1, 0.0, 0.3, false}, {"b", 0.25, 0.2, 0.0, 0.6, true}, {"c", 2.0, 0.0, 0.0, 0.9, false}};
  EXPECT_EQ(r.count(), 3u);
  EXPECT_EQ(r.mean_oer(), (0.5 + 0.25 + 2.0) / 3);
  EXPECT_EQ(r.mean_attn_conc(), (0.3 + 0.6 + 0.9) / 3);
  EXPECT_EQ(r.empty_masks(), 1u);
  const std::string text = r.to_text();
  EXPECT_NE(text.find("sample=b oer=0.25 coverage=0.2 fg_l2=0 attn_conc=0.6 empty_mask=1\n"), std::string::npos);
  EXPECT_NE(text.find("[summary]\ncount=3\nmean_oer=0.916666667\n"), std::string::npos);
  EXPECT_NE(text.find("config_hash=abc\n"), std::string::npos);
}

TEST(Evaluate, EmptyDatasetGivesEmptyReport) {
  RunConfig cfg = tiny_run();
  Model model(cfg.model);
  EvalReport r = evaluate(model, {}, cfg);
  EXPECT_EQ(r.count(), 0u);
  EXPECT_EQ(r.to_text(), "[summary]\ncount=0\nempty_masks=0\nconfig_hash=" + config_hash(cfg) + "\n");
}

TEST(Evaluate, DeterministicAcrossRunsAndThreadCounts) {
  RunConfig cfg = tiny_run();
  Model model(cfg.model);
  auto samples = gen_dataset(12, 3, tiny_scene());
  std::vector<Tensor> images;
  EvalReport a = evaluate(model, samples, cfg, {1, &images});
  EvalReport b = evaluate(model, samples, cfg, {3, nullptr});
  EXPECT_EQ(a.to_text(), b.to_text());
  ASSERT_EQ(a.count(), 3u);
  ASSERT_EQ(images.size(), 3u);
  const std::regex line(R"(sample=\S+ oer=\S+ coverage=\S+ fg_l2=0 attn_conc=\S+ empty_mask=[01])");
  std::istringstream is(a.to_text());
  std::string l;
  for (int i = 0; i < 3 && std::getline(is, l); ++i) EXPECT_TRUE(std::regex_match(l, line)) << l;
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.records[i].id, samples[i].id);
    EXPECT_EQ(a.records[i].fg_l2, 0.0);
    EXPECT_GE(a.records[i].attn_conc, 0.0);
    EXPECT_LE(a.records[i].attn_conc, 1.0);
    EXPECT_EQ(foreground_l2(images[i], samples[i].cond.I, samples[i].cond.m), 0.0);
  }
  // A different eval seed changes the samples.
  RunConfig other = cfg;
  other.eval.seed = 100;
  EXPECT_NE(evaluate(model, samples, other, {1, nullptr}).to_text(), a.to_text());
}

TEST(Evaluate, MaxSamplesTruncates) {
  RunConfig cfg = tiny_run();
  cfg.eval.max_samples = 2;
  Model model(cfg.model);
  EXPECT_EQ(evaluate(model, gen_dataset(12, 3, tiny_scene()), cfg).count(), 2u);
}

}  // namespace
}  // namespace fgp
