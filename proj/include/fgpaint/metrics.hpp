// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fgpaint/config.hpp"
#include "fgpaint/data.hpp"
#include "fgpaint/model.hpp"

namespace fgp {

// Object extension: Σ relu(m_s - m_g) / Σ m_g. Unbounded above. Masks are
// [H, W] in {0, 1}; an empty ground truth throws MetricError.
double oer(const Tensor& m_s, const Tensor& m_g);
// Under-coverage counterpart: Σ relu(m_g - m_s) / Σ m_g.
double coverage(const Tensor& m_s, const Tensor& m_g);

struct SegmentResult {
  Tensor mask;  // [H, W] in {0, 1}
  bool empty = false;
};

// Proxy segmenter for the synthetic scenes: luminance above `threshold`,
// then the largest 4-connected component (first in raster order on ties).
SegmentResult generated_mask(const Tensor& image, float threshold = 0.5f);

// Mean squared difference over all channels of pixels where m == 1.
double foreground_l2(const Tensor& final_image, const Tensor& reference, const Tensor& m);

// Pixel mask [H, W] -> token-grid mask [rows, cols]; a cell is in the mask
// when at least half of its pixels are.
Tensor mask_to_grid(const Tensor& m, int rows, int cols);

// Share of attention from in-mask queries that lands on in-mask subject
// keys, averaged over blocks (undefined maps skipped), batch and heads.
// Each map is [B, heads, N, N] over the grid of `grid_mask` ([rows, cols],
// shared by the batch).
double attention_concentration(const std::vector<Tensor>& maps, const Tensor& grid_mask);

struct EvalRecord {
  std::string id;
  double oer = 0;
  double coverage = 0;
  double fg_l2 = 0;
  double attn_conc = 0;
  bool empty_mask = false;
};

struct EvalReport {
  std::vector<EvalRecord> records;
  std::string config_hash;

  std::size_t count() const { return records.size(); }
  double mean_oer() const;
  double mean_coverage() const;
  double mean_fg_l2() const;
  double mean_attn_conc() const;
  std::size_t empty_masks() const;

  // One `sample=` line per record, then the summary block.
  std::string to_text() const;
};

struct EvalOptions {
  int threads = 0;  // 0 = hardware concurrency
  // Receives the composited images in sample order when non-null.
  std::vector<Tensor>* images = nullptr;
};

// Samples every item with its own subject conditioning (seed derived from
// cfg.eval.seed and the sample index), composites the subject back, and
// scores the result. Results do not depend on the thread count.
EvalReport evaluate(const Model& model, const std::vector<Sample>& samples, const RunConfig& cfg,
                    const EvalOptions& options = {});

// Generation for one sample: decoded, clamped to [0, 1], composited.
struct Generation {
  Tensor raw;        // [3, H, W] decoded sample
  Tensor composite;  // [3, H, W]
  ForwardTrace trace;
};
Generation generate(const Model& model, const Sample& sample, const TrainConfig& train, std::uint64_t seed,
                    bool want_trace);

}  // namespace fgp
