// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "fgpaint/diffusion.hpp"
#include "fgpaint/errors.hpp"
#include "fgpaint/ops.hpp"
#include "fgpaint/tape.hpp"

namespace fgp {

namespace {

Tensor stack(const std::vector<Tensor>& parts) {
  Shape shape = parts.at(0).shape();
  shape.insert(shape.begin(), std::int64_t(parts.size()));
  FloatBuffer data;
  data.reserve(static_cast<std::size_t>(shape_numel(shape)));
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape()) throw DimensionError("stack: mixed shapes");
    data.insert(data.end(), p.data().begin(), p.data().end());
  }
  return Tensor::from_buffer(std::move(shape), std::move(data));
}

Tensor unstack(const Tensor& t, std::int64_t i) {
  Shape shape(t.shape().begin() + 1, t.shape().end());
  const auto n = shape_numel(shape);
  auto d = t.data();
  return Tensor::from_buffer(std::move(shape), FloatBuffer(d.begin() + i * n, d.begin() + (i + 1) * n));
}

Tensor images_of(const std::vector<const Sample*>& samples) {
  std::vector<Tensor> parts;
  for (const Sample* s : samples) parts.push_back(s->x0);
  return stack(parts);
}

// Fisher-Yates with the project RNG so orderings do not depend on the
// standard library.
void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng.uniform_int(0, std::int64_t(i) - 1))]);
}

class IndexStream {
 public:
  IndexStream(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    if (n == 0) throw UsageError("training needs at least one sample");
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    pos_ = n;
  }
  std::size_t next() {
    if (pos_ == order_.size()) {
      shuffle(order_, rng_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t pos_ = 0;
};

std::pair<int, int> aspect_bucket(Aspect a, int base) {
  auto round8 = [](int v) { return std::max(8, (v + 4) / 8 * 8); };
  switch (a) {
    case Aspect::Wide: return {round8(base * 9 / 8), 2 * base};
    case Aspect::Tall: return {2 * base, round8(base * 9 / 8)};
    default: return {base, base};
  }
}

}  // namespace

TrainingSet prepare_training_set(const Model& model, const std::vector<Sample>& samples) {
  Tape::Pause pause;
  TrainingSet set;
  const auto& cfg = model.config();
  constexpr std::size_t kChunk = 32;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    std::vector<const Sample*> chunk;
    for (std::size_t i = start; i < std::min(samples.size(), start + kChunk); ++i) {
      if (samples[i].height() != cfg.image_size || samples[i].width() != cfg.image_size) {
        throw DimensionError("sample " + samples[i].id + " is " + std::to_string(samples[i].height()) + "x" +
                             std::to_string(samples[i].width()) + ", model expects " +
                             std::to_string(cfg.image_size));
      }
      chunk.push_back(&samples[i]);
    }
    Tensor lat = model.vae().encode(images_of(chunk));
    Tensor sem = model.encoder().encode_semantic(model.vae(), make_subject_batch(chunk).image);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      set.samples.push_back(chunk[i]);
      set.latents.push_back(unstack(lat, std::int64_t(i)));
      set.semantic.push_back(unstack(sem, std::int64_t(i)));
    }
  }
  return set;
}

TrainBatch make_batch(const TrainingSet& set, const std::vector<std::size_t>& indices) {
  std::vector<const Sample*> s;
  std::vector<Tensor> lat, sem, text;
  for (auto i : indices) {
    s.push_back(set.samples.at(i));
    lat.push_back(set.latents.at(i));
    sem.push_back(set.semantic.at(i));
    text.push_back(set.samples[i]->text_vec);
  }
  return {stack(lat), stack(text), make_subject_batch(s), stack(sem)};
}

VaeReport pretrain_vae(Model& model, const std::vector<Sample>& samples, const TrainConfig& cfg, std::ostream* log) {
  auto& store = model.params();
  store.set_frozen(ParamGroup::Vae, false);
  std::vector<Tensor> params;
  for (auto& p : store.params()) {
    if (p.group != ParamGroup::Vae) continue;
    if (p.name == "vae.latent_shift" || p.name == "vae.latent_scale") {
      p.value.set_requires_grad(false);
      continue;
    }
    params.push_back(p.value);
  }
  Adam::Options o;
  o.lr = cfg.vae_lr;
  o.beta1 = 0.9;
  Adam adam(params, o);
  IndexStream idx(samples.size(), derive_seed(cfg.seed, 101));
  VaeReport rep;
  for (int step = 0; step < cfg.vae_steps; ++step) {
    std::vector<const Sample*> batch;
    for (int b = 0; b < cfg.vae_batch; ++b) batch.push_back(&samples[idx.next()]);
    Tensor x = images_of(batch);
    for (auto& p : params) p.zero_grad();
    Tape tape;
    double l;
    {
      Tape::Scope scope(tape);
      Tensor loss = mse(model.vae().decode(model.vae().encode_raw(x)), x);
      l = loss.item();
      if (!std::isfinite(l)) throw NumericError("autoencoder loss is not finite at step " + std::to_string(step));
      tape.backward(loss);
    }
    adam.step();
    if (step == 0) rep.first_loss = l;
    rep.final_loss = l;
    if (log && (step % 100 == 0 || step + 1 == cfg.vae_steps)) *log << "vae_step=" << step << " loss=" << l << '\n';
  }
  std::vector<const Sample*> all;
  for (const auto& s : samples) all.push_back(&s);
  if (!all.empty()) model.vae().fit_normalization(images_of(all));
  store.set_frozen(ParamGroup::Vae, true);
  return rep;
}

double mean_abs_gate(const Model& model) {
  double acc = 0;
  int n = 0;
  for (const auto& b : model.backbone().blocks()) {
    acc += std::abs(b.adapter().gate[0]);
    ++n;
  }
  return n ? acc / n : 0.0;
}

TrainLog train(Model& model, const std::vector<Sample>& samples, const TrainConfig& cfg, std::ostream* log) {
  auto& store = model.params();
  store.set_frozen(ParamGroup::Vae, true);
  store.set_frozen(ParamGroup::Base, cfg.freeze_base);
  const NoiseSchedule sched = NoiseSchedule::from_config(cfg);
  Adam::Options o;
  o.lr = cfg.lr;
  o.warmup = cfg.warmup;
  o.grad_clip = cfg.grad_clip;
  Adam adam(store.trainable(), o);

  TrainingSet set;
  if (!cfg.multi_aspect) set = prepare_training_set(model, samples);
  IndexStream idx(samples.size(), derive_seed(cfg.seed, 1));
  Rng noise(derive_seed(cfg.seed, 2));
  Rng aspect_rng(derive_seed(cfg.seed, 3));
  const auto start = std::chrono::steady_clock::now();

  TrainLog out;
  for (int step = 0; step < cfg.steps; ++step) {
    TrainBatch batch;
    std::vector<Sample> cropped;
    if (!cfg.multi_aspect) {
      std::vector<std::size_t> ids;
      for (int b = 0; b < cfg.batch_size; ++b) ids.push_back(idx.next());
      batch = make_batch(set, ids);
    } else {
      const Aspect aspects[3] = {Aspect::Square, Aspect::Wide, Aspect::Tall};
      const Aspect a = aspects[aspect_rng.uniform_int(0, 2)];
      const auto [h, w] = aspect_bucket(a, model.config().image_size);
      std::size_t tries = 0;
      while (int(cropped.size()) < cfg.batch_size) {
        const auto i = idx.next();
        if (++tries > 50 * samples.size() + 100) throw InfeasibleCropError("no sample admits a " + std::string(to_string(a)) + " crop");
        try {
          cropped.push_back(resize_sample(crop_sampler(samples[i], a, derive_seed(cfg.seed, 1000000 + tries)), h, w));
        } catch (const InfeasibleCropError&) {
          if (log) *log << "skip sample=" << samples[i].id << " aspect=" << to_string(a) << '\n';
        }
      }
      std::vector<const Sample*> ptrs;
      std::vector<Tensor> text;
      for (const auto& s : cropped) {
        ptrs.push_back(&s);
        text.push_back(s.text_vec);
      }
      Tape::Pause pause;
      batch.latents = model.vae().encode(images_of(ptrs));
      batch.subject = make_subject_batch(ptrs);
      batch.text = stack(text);
    }

    store.zero_grad();
    Tape tape;
    double l;
    {
      Tape::Scope scope(tape);
      Tensor loss = training_loss(model, batch, sched, noise);
      l = loss.item();
      tape.backward(loss);
    }
    adam.step();
    out.losses.push_back(l);
    out.gate_means.push_back(mean_abs_gate(model));
    if (log && (step % std::max(1, cfg.log_every) == 0 || step + 1 == cfg.steps)) {
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      char line[160];
      std::snprintf(line, sizeof line, "step=%d loss=%.6f gate_mean=%.6g wall_time=%.2f", step, l,
                    out.gate_means.back(), wall);
      *log << line << '\n' << std::flush;
    }
  }
  return out;
}

void copy_group(const ParamStore& from, ParamStore& to, ParamGroup group) {
  for (auto& p : to.params()) {
    if (p.group != group) continue;
    const Tensor& src = from.get(p.name);
    if (src.shape() != p.value.shape()) throw DimensionError("copy_group: shape mismatch for " + p.name);
    std::copy(src.data().begin(), src.data().end(), p.value.mutable_data().begin());
  }
}

}  // namespace fgp
