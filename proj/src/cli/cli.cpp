// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fgpaint/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "fgpaint/checkpoint.hpp"
#include "fgpaint/diffusion.hpp"
#include "fgpaint/errors.hpp"
#include "fgpaint/image_io.hpp"
#include "fgpaint/metrics.hpp"
#include "fgpaint/ptf.hpp"

namespace fgp {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string::npos ? s.size() : comma;
    if (end > start) out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
}

// Model fields come from the checkpoint; training and evaluation settings from
// --config, else the config stored next to the checkpoint, else defaults.
RunConfig run_config_for(const fs::path& ckpt, const Model& model, const std::string& config_path,
                         const std::vector<std::string>& sets) {
  RunConfig cfg;
  if (!config_path.empty()) {
    cfg = load_config(config_path);
  } else if (fs::exists(ckpt / "config.txt")) {
    cfg = load_config(ckpt / "config.txt");
  }
  apply_overrides(cfg, sets);
  cfg.model = model.config();
  return cfg;
}

std::vector<Sample> load_samples(const fs::path& dir, const ModelConfig& model) {
  auto samples = load_dataset(dir);
  for (const auto& s : samples) {
    if (s.height() != model.image_size || s.width() != model.image_size) {
      throw UsageError("dataset sample " + s.id + " is " + std::to_string(s.height()) + "x" +
                       std::to_string(s.width()) + ", model expects " + std::to_string(model.image_size) + " square");
    }
  }
  return samples;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UsageError("cannot write " + path.string());
  return os;
}

struct GenDataArgs {
  std::uint64_t seed = 0;
  std::size_t count = 0;
  std::string out;
  int height = 64, width = 64;
  std::string shapes = "ellipse,rectangle,polygon";
  std::string backgrounds = "gradient,texture,solid";
  double size_min = 0.08, size_max = 0.25;
};

int run_gen_data(const GenDataArgs& a, std::ostream& out) {
  SceneSpec scene;
  scene.height = a.height;
  scene.width = a.width;
  scene.size_min = a.size_min;
  scene.size_max = a.size_max;
  scene.shapes.clear();
  for (const auto& s : split_list(a.shapes)) scene.shapes.push_back(parse_shape_family(s));
  scene.backgrounds.clear();
  for (const auto& b : split_list(a.backgrounds)) scene.backgrounds.push_back(parse_background_family(b));
  if (scene.shapes.empty() || scene.backgrounds.empty()) throw UsageError("gen-data: empty shape or background list");
  save_dataset(a.out, gen_dataset(a.seed, a.count, scene));
  out << "wrote " << a.count << " samples to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string config, dataset, out, flavor, ablation, log;
  std::vector<std::string> sets;
  bool freeze_base = false;
};

int run_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : load_config(a.config);
  apply_overrides(cfg, a.sets);
  if (!a.flavor.empty()) apply_config_value(cfg, "flavor", a.flavor);
  if (a.ablation == "no-rope") cfg.model.anchor = false;
  if (a.ablation == "cross-inject") cfg.model.inject_site = InjectSite::Cross;
  if (a.ablation == "vae-only") cfg.model.subject_encoder = SubjectEncoderKind::VaeOnly;
  if (a.freeze_base) cfg.train.freeze_base = true;
  cfg.model.validate();
  const auto samples = load_samples(a.dataset, cfg.model);
  if (samples.empty()) throw UsageError("train: dataset " + a.dataset + " has no samples");

  std::ofstream log_file;
  if (!a.log.empty()) log_file = open_out(a.log);
  std::ostream& log = a.log.empty() ? out : log_file;

  Model model(cfg.model);
  pretrain_vae(model, samples, cfg.train, &log);
  train(model, samples, cfg.train, &log);
  save_checkpoint(a.out, model, cfg.train.steps);
  open_out(fs::path(a.out) / "config.txt") << config_text(cfg);
  out << "checkpoint " << a.out << " config_hash=" << config_hash(cfg) << "\n";
  return 0;
}

struct SampleArgs {
  std::string checkpoint, dataset, out, config;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  std::size_t count = 1;
};

int run_sample(const SampleArgs& a, std::ostream& out) {
  LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
  const RunConfig cfg = run_config_for(a.checkpoint, *ck.model, a.config, a.sets);
  std::vector<Sample> samples;
  if (!a.dataset.empty()) {
    samples = load_samples(a.dataset, cfg.model);
    samples.resize(std::min(samples.size(), a.count));
  } else {
    SceneSpec scene;
    scene.height = scene.width = cfg.model.image_size;
    samples = gen_dataset(a.seed, a.count, scene);
  }
  fs::create_directories(a.out);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Generation g = generate(*ck.model, samples[i], cfg.train, derive_seed(a.seed, i), false);
    write_ppm(fs::path(a.out) / (samples[i].id + ".ppm"), g.composite);
    write_ppm(fs::path(a.out) / (samples[i].id + ".raw.ppm"), g.raw);
  }
  out << "wrote " << samples.size() << " samples to " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint, dataset, out, config;
  std::vector<std::string> sets;
  int threads = 0;
};

int run_eval(const EvalArgs& a, std::ostream& out) {
  LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
  const RunConfig cfg = run_config_for(a.checkpoint, *ck.model, a.config, a.sets);
  const EvalReport report = evaluate(*ck.model, load_samples(a.dataset, cfg.model), cfg, {a.threads, nullptr});
  if (a.out.empty()) {
    out << report.to_text();
  } else {
    open_out(a.out) << report.to_text();
  }
  return 0;
}

struct DumpArgs {
  std::string checkpoint, dataset, sample, out, config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

int run_dump_attn(const DumpArgs& a, std::ostream& out) {
  LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
  const RunConfig cfg = run_config_for(a.checkpoint, *ck.model, a.config, a.sets);
  const auto samples = load_samples(a.dataset, cfg.model);
  auto it = std::find_if(samples.begin(), samples.end(), [&](const Sample& s) { return s.id == a.sample; });
  if (it == samples.end()) throw UsageError("dump-attn: no sample '" + a.sample + "' in " + a.dataset);
  const Generation g = generate(*ck.model, *it, cfg.train, a.seed.value_or(cfg.eval.seed), true);

  const int rows = cfg.model.grid_size(), cols = rows;
  const Tensor grid = mask_to_grid(it->cond.m, rows, cols);
  const auto n = static_cast<std::size_t>(rows * cols);
  std::vector<std::size_t> queries;
  for (std::size_t q = 0; q < n; ++q)
    if (grid[std::int64_t(q)] != 0.0f) queries.push_back(q);
  if (queries.empty())
    for (std::size_t q = 0; q < n; ++q) queries.push_back(q);

  fs::create_directories(a.out);
  write_ppm(fs::path(a.out) / "composite.ppm", g.composite);
  const float inv_steps = 1.0f / float(cfg.train.timesteps);
  const auto& maps = g.trace.subject_maps;
  for (std::size_t b = 0; b < maps.size(); ++b) {
    if (!maps[b].defined()) continue;
    // Maps are summed over sampling steps; store the per-step mean.
    Tensor mean = maps[b].detach();
    for (auto& v : mean.mutable_data()) v *= inv_steps;
    const std::string stem = "block" + std::to_string(b + 1);
    write_ptf(fs::path(a.out) / (stem + ".ptf"), mean);
    // Key-cell heat map: attention from the chosen queries, averaged over heads.
    Tensor heat = Tensor::zeros({rows, cols});
    auto h = heat.mutable_data();
    auto d = mean.data();
    const auto heads = static_cast<std::size_t>(mean.dim(1));
    for (std::size_t hd = 0; hd < heads; ++hd)
      for (auto q : queries)
        for (std::size_t k = 0; k < n; ++k) h[k] += d[(hd * n + q) * n + k];
    write_pgm(fs::path(a.out) / (stem + ".pgm"), heat, true);
    out << stem << " attn_conc=" << attention_concentration({maps[b]}, grid) << "\n";
  }
  out << "attn_conc=" << attention_concentration(maps, grid) << "\n";
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Subject-conditioned inpainting toolkit", "fgpaint"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic scene dataset");
  gen->add_option("--seed", gd.seed, "Dataset seed")->required();
  gen->add_option("--count", gd.count, "Number of scenes")->required();
  gen->add_option("--out", gd.out, "Output directory")->required();
  gen->add_option("--height", gd.height, "Image height")->check(CLI::PositiveNumber);
  gen->add_option("--width", gd.width, "Image width")->check(CLI::PositiveNumber);
  gen->add_option("--shapes", gd.shapes, "Comma-separated shape families");
  gen->add_option("--backgrounds", gd.backgrounds, "Comma-separated background families");
  gen->add_option("--size-min", gd.size_min, "Smallest foreground area fraction");
  gen->add_option("--size-max", gd.size_max, "Largest foreground area fraction");

  TrainArgs tr;
  auto* trn = app.add_subcommand("train", "Pretrain the autoencoder, then train and save a checkpoint");
  trn->add_option("--config", tr.config, "key=value config file")->check(CLI::ExistingFile);
  trn->add_option("--dataset", tr.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  trn->add_option("--out", tr.out, "Checkpoint directory")->required();
  trn->add_option("--flavor", tr.flavor, "Backbone flavor")->check(CLI::IsMember({"standard", "mm"}));
  trn->add_option("--ablation", tr.ablation, "Ablation variant")
      ->check(CLI::IsMember({"no-rope", "cross-inject", "vae-only"}));
  trn->add_flag("--freeze-base", tr.freeze_base, "Keep the base backbone frozen");
  trn->add_option("--set", tr.sets, "Config override key=value (repeatable)");
  trn->add_option("--log", tr.log, "Write training log here instead of stdout");

  SampleArgs sa;
  auto* smp = app.add_subcommand("sample", "Generate composited images from a checkpoint");
  smp->add_option("--checkpoint", sa.checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  smp->add_option("--dataset", sa.dataset, "Conditioning dataset (default: fresh scenes from --seed)")
      ->check(CLI::ExistingDirectory);
  smp->add_option("--seed", sa.seed, "Sampling seed");
  smp->add_option("--count", sa.count, "Number of images")->check(CLI::PositiveNumber);
  smp->add_option("--out", sa.out, "Output directory")->required();
  smp->add_option("--config", sa.config, "key=value config file")->check(CLI::ExistingFile);
  smp->add_option("--set", sa.sets, "Config override key=value (repeatable)");

  EvalArgs ev;
  auto* evl = app.add_subcommand("eval", "Write the evaluation report for a checkpoint");
  evl->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  evl->add_option("--dataset", ev.dataset, "Evaluation dataset")->required()->check(CLI::ExistingDirectory);
  evl->add_option("--out", ev.out, "Report file (default stdout)");
  evl->add_option("--config", ev.config, "key=value config file")->check(CLI::ExistingFile);
  evl->add_option("--set", ev.sets, "Config override key=value (repeatable)");
  evl->add_option("--threads", ev.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);

  DumpArgs da;
  auto* dmp = app.add_subcommand("dump-attn", "Dump subject attention maps for one sample");
  dmp->add_option("--checkpoint", da.checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  dmp->add_option("--dataset", da.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  dmp->add_option("--sample", da.sample, "Sample id")->required();
  dmp->add_option("--out", da.out, "Output directory")->required();
  dmp->add_option("--seed", da.seed, "Sampling seed (default eval_seed)");
  dmp->add_option("--config", da.config, "key=value config file")->check(CLI::ExistingFile);
  dmp->add_option("--set", da.sets, "Config override key=value (repeatable)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) return run_gen_data(gd, out);
    if (*trn) return run_train(tr, out);
    if (*smp) return run_sample(sa, out);
    if (*evl) return run_eval(ev, out);
    if (*dmp) return run_dump_attn(da, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}

}  // namespace fgp
