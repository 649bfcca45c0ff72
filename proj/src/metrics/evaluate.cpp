// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <thread>

#include "fgpaint/diffusion.hpp"
#include "fgpaint/errors.hpp"
#include "fgpaint/metrics.hpp"
#include "fgpaint/ops.hpp"
#include "fgpaint/tape.hpp"

namespace fgp {

namespace {

template <typename F>
double mean_of(const std::vector<EvalRecord>& r, F field) {
  if (r.empty()) return 0.0;
  double acc = 0;
  for (const auto& e : r) acc += field(e);
  return acc / double(r.size());
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

double EvalReport::mean_oer() const { return mean_of(records, [](const EvalRecord& e) { return e.oer; }); }
double EvalReport::mean_coverage() const {
  return mean_of(records, [](const EvalRecord& e) { return e.coverage; });
}
double EvalReport::mean_fg_l2() const { return mean_of(records, [](const EvalRecord& e) { return e.fg_l2; }); }
double EvalReport::mean_attn_conc() const {
  return mean_of(records, [](const EvalRecord& e) { return e.attn_conc; });
}
std::size_t EvalReport::empty_masks() const {
  return std::size_t(std::count_if(records.begin(), records.end(), [](const EvalRecord& e) { return e.empty_mask; }));
}

std::string EvalReport::to_text() const {
  std::string out;
  for (const auto& e : records) {
    out += "sample=" + e.id + " oer=" + fmt(e.oer) + " coverage=" + fmt(e.coverage) + " fg_l2=" + fmt(e.fg_l2) +
           " attn_conc=" + fmt(e.attn_conc) + " empty_mask=" + (e.empty_mask ? "1" : "0") + "\n";
  }
  out += "[summary]\n";
  out += "count=" + std::to_string(count()) + "\n";
  if (count() > 0) {
    out += "mean_oer=" + fmt(mean_oer()) + "\n";
    out += "mean_coverage=" + fmt(mean_coverage()) + "\n";
    out += "mean_fg_l2=" + fmt(mean_fg_l2()) + "\n";
    out += "mean_attn_conc=" + fmt(mean_attn_conc()) + "\n";
  }
  out += "empty_masks=" + std::to_string(empty_masks()) + "\n";
  out += "config_hash=" + config_hash + "\n";
  return out;
}

Generation generate(const Model& model, const Sample& sample, const TrainConfig& train, std::uint64_t seed,
                    bool want_trace) {
  Tape::Pause pause;
  Generation g;
  const SubjectFeature feature = model.encode_subject(make_subject_batch({&sample}));
  Tensor text = reshape(sample.text_vec, {1, sample.text_vec.numel()});
  Tensor latents =
      ddpm_sample(model, text, &feature, NoiseSchedule::from_config(train), seed, want_trace ? &g.trace : nullptr,
                  train.x0_clip);
  Tensor img = model.vae().decode(latents);
  g.raw = Tensor::zeros({3, img.dim(2), img.dim(3)});
  auto src = img.data();
  auto dst = g.raw.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::clamp(src[i], 0.0f, 1.0f);
  g.composite = composite_foreground(g.raw, sample.cond.I, sample.cond.m);
  return g;
}

EvalReport evaluate(const Model& model, const std::vector<Sample>& samples, const RunConfig& cfg,
                    const EvalOptions& options) {
  std::size_t n = samples.size();
  if (cfg.eval.max_samples > 0) n = std::min(n, std::size_t(cfg.eval.max_samples));
  EvalReport report;
  report.config_hash = config_hash(cfg);
  report.records.resize(n);
  if (options.images) options.images->assign(n, Tensor());
  const int factor = cfg.model.latent_downsample * cfg.model.patch_size;

  auto run_one = [&](std::size_t i) {
    const Sample& s = samples[i];
    Generation g = generate(model, s, cfg.train, derive_seed(cfg.eval.seed, i), true);
    EvalRecord& r = report.records[i];
    r.id = s.id;
    const SegmentResult seg = generated_mask(g.composite, cfg.eval.seg_threshold);
    r.empty_mask = seg.empty;
    r.oer = oer(seg.mask, s.cond.m);
    r.coverage = coverage(seg.mask, s.cond.m);
    r.fg_l2 = foreground_l2(g.composite, s.cond.I, s.cond.m);
    r.attn_conc = attention_concentration(g.trace.subject_maps,
                                          mask_to_grid(s.cond.m, s.height() / factor, s.width() / factor));
    if (options.images) (*options.images)[i] = g.composite;
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t threads = std::min<std::size_t>(n, options.threads > 0 ? std::size_t(options.threads) : hw);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) run_one(i);
    return report;
  }
  // Each worker writes only its own records, so the report is independent
  // of scheduling.
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
          try {
            run_one(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return report;
}

}  // namespace fgp
