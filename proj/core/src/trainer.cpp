#include "inklab/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "inklab/checkpoint.hpp"
#include "inklab/tensor_image.hpp"

namespace inklab::trainer {

namespace fs = std::filesystem;

namespace {

std::string join_tokens(const std::vector<std::string>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += v[i];
  }
  return out;
}

std::vector<std::string> split_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string run_id_for(const RunConfig& cfg, const std::string& variant) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(variant + "\n" + cfg.echo())));
  return buf;
}

void write_run_manifest(const fs::path& run_dir, const RunConfig& cfg, const std::string& variant,
                        const std::vector<fs::path>& outputs) {
  std::ostringstream os;
  os << "run_id " << run_id_for(cfg, variant) << '\n';
  os << "variant " << variant << '\n';
  for (const auto& p : outputs) os << "output " << p.string() << '\n';
  os << "config_begin\n" << cfg.echo() << "config_end\n";
  atomic_write_text(run_dir / "run_manifest.txt", os.str());
}

/// Most common target-style artist name in the manifest (prompt minus the
/// trailing " style"), used for default sampling prompts.
std::string dominant_artist(const vision::DatasetManifest& manifest, const std::string& domain) {
  std::map<std::string, int> counts;
  for (const auto& r : manifest.records) {
    if (r.domain != domain) continue;
    std::string artist = r.prompt;
    const std::string suffix = " style";
    if (artist.size() > suffix.size() && artist.ends_with(suffix))
      artist.resize(artist.size() - suffix.size());
    counts[artist]++;
  }
  std::string best;
  int best_n = -1;
  for (const auto& [k, n] : counts)
    if (n > best_n) {
      best = k;
      best_n = n;
    }
  return best;
}

struct MetricLog {
  std::ofstream os;
  explicit MetricLog(const fs::path& path, const std::string& header, bool append) {
    os.open(path, append ? std::ios::app : std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open metric log " + path.string());
    if (!append) os << header << '\n';
  }
  template <typename... Ts>
  void row(Ts&&... vs) {
    bool first = true;
    ((os << (first ? "" : "\t") << vs, first = false), ...);
    os << '\n';
    os.flush();
  }
};

std::vector<const vision::TripletSample*> draw_batch(const std::vector<vision::TripletSample>& pool,
                                                     int n, Rng& rng) {
  std::vector<const vision::TripletSample*> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    out.push_back(&pool[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(pool.size())))]);
  return out;
}

void put_common_meta(Checkpoint& ckpt, const RunConfig& cfg, const std::string& variant,
                     const std::string& artist, int64_t next_step, const Rng& rng) {
  ckpt.meta["variant"] = variant;
  ckpt.meta["resolution"] = std::to_string(cfg.resolution);
  ckpt.meta["image_channels"] = std::to_string(cfg.image_channels);
  ckpt.meta["style_artist"] = artist;
  ckpt.meta["next_step"] = std::to_string(next_step);
  ckpt.meta["rng"] = rng.state_hex();
  ckpt.meta["guidance_scale"] = std::to_string(cfg.guidance_scale);
}

void put_diffusion_meta(Checkpoint& ckpt, const RunConfig& cfg,
                        const diffusion::TextEmbedder& embedder) {
  ckpt.meta["base_channels"] = std::to_string(cfg.base_channels);
  ckpt.meta["channel_mults"] = cfg.channel_mults;
  ckpt.meta["time_dim"] = std::to_string(cfg.time_dim);
  ckpt.meta["text_dim"] = std::to_string(cfg.text_dim);
  ckpt.meta["diffusion_T"] = std::to_string(cfg.diffusion_T);
  ckpt.meta["vocab"] = join_tokens(embedder.vocab());
}

int64_t meta_i64(const Checkpoint& ckpt, const std::string& key) {
  auto it = ckpt.meta.find(key);
  if (it == ckpt.meta.end()) throw std::runtime_error("checkpoint missing meta key " + key);
  return std::stoll(it->second);
}

std::string meta_str(const Checkpoint& ckpt, const std::string& key) {
  auto it = ckpt.meta.find(key);
  if (it == ckpt.meta.end()) throw std::runtime_error("checkpoint missing meta key " + key);
  return it->second;
}

RunConfig config_from_meta(const Checkpoint& ckpt) {
  RunConfig cfg;
  cfg.resolution = static_cast<int>(meta_i64(ckpt, "resolution"));
  cfg.image_channels = static_cast<int>(meta_i64(ckpt, "image_channels"));
  cfg.base_channels = static_cast<int>(meta_i64(ckpt, "base_channels"));
  cfg.channel_mults = meta_str(ckpt, "channel_mults");
  cfg.time_dim = static_cast<int>(meta_i64(ckpt, "time_dim"));
  cfg.text_dim = static_cast<int>(meta_i64(ckpt, "text_dim"));
  cfg.diffusion_T = static_cast<int>(meta_i64(ckpt, "diffusion_T"));
  return cfg;
}

}  // namespace

std::string render_prompt(const std::string& artist) {
  std::string s = kEvalPromptTemplate;
  const std::string ph = "{artist}";
  const auto pos = s.find(ph);
  s.replace(pos, ph.size(), artist);
  return s;
}

TrainResult train_diffusion_base(const RunConfig& cfg, const vision::DatasetManifest& manifest,
                                 const fs::path& run_dir, const fs::path& resume) {
  cfg.validate();
  fs::create_directories(run_dir);
  const fs::path metrics_path = run_dir / "metrics.tsv";
  const fs::path final_path = run_dir / "final.ckpt";
  write_run_manifest(run_dir, cfg, "diffusion-base", {metrics_path, final_path});

  Rng rng(cfg.seed);
  const auto samples = vision::load_all(manifest);
  if (samples.empty()) throw std::runtime_error("train: empty dataset");

  std::vector<std::string> prompts;
  for (const auto& r : manifest.records) prompts.push_back(r.prompt);
  diffusion::TextEmbedder embedder(diffusion::TextEmbedder::vocab_from_prompts(prompts),
                                   cfg.text_dim, rng);
  diffusion::Denoiser denoiser(cfg.denoiser_config(), rng);
  const auto ns = diffusion::default_schedule(cfg.diffusion_T);
  const std::string artist = dominant_artist(manifest, "jiehua");

  std::vector<Parameter*> targets;
  for (auto& p : denoiser.params().params()) targets.push_back(&p);
  for (auto& p : embedder.params().params()) targets.push_back(&p);
  Adam opt(targets);

  int64_t start_step = 0;
  if (!resume.empty()) {
    const Checkpoint ckpt = load_checkpoint(resume);
    if (meta_str(ckpt, "variant") != "diffusion-base")
      throw std::runtime_error("resume checkpoint is not a diffusion-base run");
    ckpt.restore_registry(denoiser.params(), "base.");
    ckpt.restore_registry(embedder.params(), "base.");
    ckpt.restore_optimizer(opt);
    rng = Rng::from_state_hex(meta_str(ckpt, "rng"));
    start_step = meta_i64(ckpt, "next_step");
  }

  const LrSchedule schedule = cfg.schedule();
  MetricLog log(metrics_path, "step\tlr\tloss", start_step > 0);

  auto save = [&](const fs::path& path, int64_t next_step) {
    Checkpoint ckpt;
    put_common_meta(ckpt, cfg, "diffusion-base", artist, next_step, rng);
    put_diffusion_meta(ckpt, cfg, embedder);
    ckpt.add_registry(denoiser.params(), "base.");
    ckpt.add_registry(embedder.params(), "base.");
    ckpt.add_optimizer(opt);
    save_checkpoint(path, ckpt);
  };

  TrainResult result{final_path, metrics_path, {}};
  int64_t micro = 0;
  for (int64_t step = start_step; step < cfg.total_steps; ++step) {
    double loss_acc = 0.0;
    for (int k = 0; k < cfg.gradient_accumulation_steps; ++k) {
      const auto batch_samples = draw_batch(samples, cfg.batch_size, rng);
      const auto batch =
          diffusion::assemble_batch(batch_samples, cfg.prompt_dropout, /*with_control=*/false, rng);
      loss_acc += diffusion::diffusion_train_step(denoiser, embedder, ns, batch, rng);
      accumulate_and_maybe_step(opt, schedule, ++micro, cfg.gradient_accumulation_steps);
    }
    const double loss = loss_acc / cfg.gradient_accumulation_steps;
    result.step_losses.push_back(loss);
    log.row(step, schedule.at(step), loss);
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 &&
        step + 1 < cfg.total_steps)
      save(run_dir / ("ckpt_step" + std::to_string(step + 1) + ".ckpt"), step + 1);
  }
  save(final_path, cfg.total_steps);
  return result;
}

TrainResult train_controlnet(const RunConfig& cfg, const vision::DatasetManifest& manifest,
                             const fs::path& base_checkpoint, const fs::path& run_dir,
                             const fs::path& resume) {
  cfg.validate();
  if (base_checkpoint.empty() || !fs::exists(base_checkpoint))
    throw std::runtime_error(
        "controlnet fine-tuning requires a trained diffusion-base checkpoint "
        "(--base-checkpoint); run `train --variant diffusion-base` first");
  fs::create_directories(run_dir);
  const fs::path metrics_path = run_dir / "metrics.tsv";
  const fs::path final_path = run_dir / "final.ckpt";
  write_run_manifest(run_dir, cfg, "controlnet", {metrics_path, final_path});

  const Checkpoint base_ckpt = load_checkpoint(base_checkpoint);
  if (meta_str(base_ckpt, "variant") != "diffusion-base")
    throw std::runtime_error("base checkpoint is not a diffusion-base checkpoint");

  // model geometry comes from the base checkpoint, not the fine-tune config
  RunConfig model_cfg = cfg;
  const RunConfig stored = config_from_meta(base_ckpt);
  model_cfg.resolution = stored.resolution;
  model_cfg.image_channels = stored.image_channels;
  model_cfg.base_channels = stored.base_channels;
  model_cfg.channel_mults = stored.channel_mults;
  model_cfg.time_dim = stored.time_dim;
  model_cfg.text_dim = stored.text_dim;
  model_cfg.diffusion_T = stored.diffusion_T;

  Rng rng(cfg.seed);
  const auto samples = vision::load_all(manifest);
  if (samples.empty()) throw std::runtime_error("train: empty dataset");

  diffusion::TextEmbedder embedder(split_tokens(meta_str(base_ckpt, "vocab")), model_cfg.text_dim,
                                   rng);
  diffusion::Denoiser denoiser(model_cfg.denoiser_config(), rng);
  base_ckpt.restore_registry(denoiser.params(), "base.");
  base_ckpt.restore_registry(embedder.params(), "base.");

  auto graft = controlnet::GraftedDenoiser::graft(denoiser, rng);
  embedder.params().lock_all();  // the prompt table belongs to the locked base

  const auto ns = diffusion::default_schedule(model_cfg.diffusion_T);
  const std::string artist = dominant_artist(manifest, "jiehua");

  Adam opt(graft.branch_params());

  int64_t start_step = 0;
  if (!resume.empty()) {
    const Checkpoint ckpt = load_checkpoint(resume);
    if (meta_str(ckpt, "variant") != "controlnet")
      throw std::runtime_error("resume checkpoint is not a controlnet run");
    ckpt.restore_registry(denoiser.params(), "base.");
    ckpt.restore_registry(embedder.params(), "base.");
    ckpt.restore_registry(graft.branch_params(), "branch.");
    ckpt.restore_optimizer(opt);
    rng = Rng::from_state_hex(meta_str(ckpt, "rng"));
    start_step = meta_i64(ckpt, "next_step");
  }

  const LrSchedule schedule = cfg.schedule();
  MetricLog log(metrics_path, "step\tlr\tloss", start_step > 0);

  auto save = [&](const fs::path& path, int64_t next_step) {
    Checkpoint ckpt;
    put_common_meta(ckpt, model_cfg, "controlnet", artist, next_step, rng);
    put_diffusion_meta(ckpt, model_cfg, embedder);
    ckpt.add_registry(denoiser.params(), "base.");
    ckpt.add_registry(embedder.params(), "base.");
    ckpt.add_registry(graft.branch_params(), "branch.");
    ckpt.add_optimizer(opt);
    save_checkpoint(path, ckpt);
  };

  TrainResult result{final_path, metrics_path, {}};
  int64_t micro = 0;
  for (int64_t step = start_step; step < cfg.total_steps; ++step) {
    double loss_acc = 0.0;
    for (int k = 0; k < cfg.gradient_accumulation_steps; ++k) {
      const auto batch_samples = draw_batch(samples, cfg.batch_size, rng);
      const auto batch =
          diffusion::assemble_batch(batch_samples, cfg.prompt_dropout, /*with_control=*/true, rng);
      loss_acc += controlnet::finetune_step(graft, embedder, ns, batch, rng);
      accumulate_and_maybe_step(opt, schedule, ++micro, cfg.gradient_accumulation_steps);
    }
    const double loss = loss_acc / cfg.gradient_accumulation_steps;
    result.step_losses.push_back(loss);
    log.row(step, schedule.at(step), loss);
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 &&
        step + 1 < cfg.total_steps)
      save(run_dir / ("ckpt_step" + std::to_string(step + 1) + ".ckpt"), step + 1);
  }
  save(final_path, cfg.total_steps);
  return result;
}

TrainResult train_cyclegan(const RunConfig& cfg, const vision::DatasetManifest& manifest,
                           const fs::path& run_dir, const fs::path& resume) {
  cfg.validate();
  fs::create_directories(run_dir);
  const fs::path metrics_path = run_dir / "metrics.tsv";
  const fs::path final_path = run_dir / "final.ckpt";
  write_run_manifest(run_dir, cfg, "cyclegan", {metrics_path, final_path});

  Rng rng(cfg.seed);
  const auto samples = vision::load_all(manifest);
  std::vector<vision::TripletSample> xs, ys;  // X: other, Y: jiehua
  for (size_t i = 0; i < samples.size(); ++i) {
    if (manifest.records[i].domain == "jiehua")
      ys.push_back(samples[i]);
    else
      xs.push_back(samples[i]);
  }
  if (xs.empty() || ys.empty())
    throw std::runtime_error("cyclegan training needs records in both domains");

  cyclegan::CycleGANState state(cfg.cyclegan_config(), rng);
  const std::string artist = dominant_artist(manifest, "jiehua");

  int64_t start_step = 0;
  if (!resume.empty()) {
    const Checkpoint ckpt = load_checkpoint(resume);
    if (meta_str(ckpt, "variant") != "cyclegan")
      throw std::runtime_error("resume checkpoint is not a cyclegan run");
    ckpt.restore_registry(state.g_xy.params());
    ckpt.restore_registry(state.f_yx.params());
    ckpt.restore_registry(state.d_x.params());
    ckpt.restore_registry(state.d_y.params());
    ckpt.restore_optimizer(state.opt_gen, "gen.");
    ckpt.restore_optimizer(state.opt_disc, "disc.");
    rng = Rng::from_state_hex(meta_str(ckpt, "rng"));
    start_step = meta_i64(ckpt, "next_step");
  }

  MetricLog log(metrics_path, "step\tlr\tdisc_x\tdisc_y\tgen_total\tcycle", start_step > 0);

  auto save = [&](const fs::path& path, int64_t next_step) {
    Checkpoint ckpt;
    put_common_meta(ckpt, cfg, "cyclegan", artist, next_step, rng);
    ckpt.meta["cyclegan_gen_base"] = std::to_string(cfg.cyclegan_gen_base);
    ckpt.meta["cyclegan_disc_base"] = std::to_string(cfg.cyclegan_disc_base);
    ckpt.meta["cyclegan_res_blocks"] = std::to_string(cfg.cyclegan_res_blocks);
    ckpt.meta["lambda_cycle"] = std::to_string(cfg.lambda_cycle);
    ckpt.add_registry(state.g_xy.params());
    ckpt.add_registry(state.f_yx.params());
    ckpt.add_registry(state.d_x.params());
    ckpt.add_registry(state.d_y.params());
    ckpt.add_optimizer(state.opt_gen, "gen.");
    ckpt.add_optimizer(state.opt_disc, "disc.");
    save_checkpoint(path, ckpt);
  };

  TrainResult result{final_path, metrics_path, {}};
  for (int64_t step = start_step; step < cfg.total_steps; ++step) {
    std::vector<const vision::Image*> xb, yb;
    for (int i = 0; i < cfg.batch_size; ++i) {
      xb.push_back(&xs[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(xs.size())))].image);
      yb.push_back(&ys[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(ys.size())))].image);
    }
    const auto rep = cyclegan::cyclegan_train_step(state, images_to_pm1(xb), images_to_pm1(yb),
                                                   cfg.cyclegan_lr);
    result.step_losses.push_back(rep.cycle);
    log.row(step, cfg.cyclegan_lr, rep.disc_x, rep.disc_y, rep.gen_total, rep.cycle);
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 &&
        step + 1 < cfg.total_steps)
      save(run_dir / ("ckpt_step" + std::to_string(step + 1) + ".ckpt"), step + 1);
  }
  save(final_path, cfg.total_steps);
  return result;
}

const diffusion::EpsModel& DiffusionBundle::model() const {
  if (graft) return *graft;
  return *denoiser;
}

std::string checkpoint_variant(const fs::path& ckpt_path) {
  return meta_str(load_checkpoint(ckpt_path), "variant");
}

int64_t load_checkpoint_step(const fs::path& ckpt_path) {
  return meta_i64(load_checkpoint(ckpt_path), "next_step");
}

DiffusionBundle load_diffusion(const fs::path& ckpt_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const std::string variant = meta_str(ckpt, "variant");
  if (variant != "diffusion-base" && variant != "controlnet")
    throw std::runtime_error("not a diffusion checkpoint: " + ckpt_path.string());

  const RunConfig cfg = config_from_meta(ckpt);
  Rng build_rng(0);  // values are overwritten by the checkpoint
  DiffusionBundle b;
  b.embedder = std::make_unique<diffusion::TextEmbedder>(split_tokens(meta_str(ckpt, "vocab")),
                                                         cfg.text_dim, build_rng);
  b.denoiser = std::make_unique<diffusion::Denoiser>(cfg.denoiser_config(), build_rng);
  ckpt.restore_registry(b.denoiser->params(), "base.");
  ckpt.restore_registry(b.embedder->params(), "base.");
  if (variant == "controlnet") {
    b.graft = std::make_unique<controlnet::GraftedDenoiser>(
        controlnet::GraftedDenoiser::graft(*b.denoiser, build_rng));
    ckpt.restore_registry(b.graft->branch_params(), "branch.");
    b.embedder->params().lock_all();
  }
  b.schedule = diffusion::default_schedule(cfg.diffusion_T);
  b.variant = variant;
  b.style_artist = meta_str(ckpt, "style_artist");
  b.trained_steps = meta_i64(ckpt, "next_step");
  b.guidance_scale = std::stod(meta_str(ckpt, "guidance_scale"));
  return b;
}

CycleGANBundle load_cyclegan(const fs::path& ckpt_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (meta_str(ckpt, "variant") != "cyclegan")
    throw std::runtime_error("not a cyclegan checkpoint: " + ckpt_path.string());
  RunConfig cfg;
  cfg.resolution = static_cast<int>(meta_i64(ckpt, "resolution"));
  cfg.image_channels = static_cast<int>(meta_i64(ckpt, "image_channels"));
  cfg.cyclegan_gen_base = static_cast<int>(meta_i64(ckpt, "cyclegan_gen_base"));
  cfg.cyclegan_disc_base = static_cast<int>(meta_i64(ckpt, "cyclegan_disc_base"));
  cfg.cyclegan_res_blocks = static_cast<int>(meta_i64(ckpt, "cyclegan_res_blocks"));
  cfg.lambda_cycle = std::stod(meta_str(ckpt, "lambda_cycle"));

  Rng build_rng(0);
  CycleGANBundle b;
  b.state = std::make_unique<cyclegan::CycleGANState>(cfg.cyclegan_config(), build_rng);
  ckpt.restore_registry(b.state->g_xy.params());
  ckpt.restore_registry(b.state->f_yx.params());
  ckpt.restore_registry(b.state->d_x.params());
  ckpt.restore_registry(b.state->d_y.params());
  b.trained_steps = meta_i64(ckpt, "next_step");
  return b;
}

std::vector<vision::Image> sample_checkpoint(const fs::path& ckpt_path, const std::string& prompt,
                                             const vision::EdgeMap* control, int n,
                                             std::optional<double> guidance_scale, uint64_t seed) {
  const DiffusionBundle b = load_diffusion(ckpt_path);
  Rng rng(seed);
  const double s = guidance_scale.value_or(b.guidance_scale);
  const std::string p = prompt.empty() ? render_prompt(b.style_artist) : prompt;
  std::vector<vision::Image> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    out.push_back(diffusion::sample_one(b.model(), *b.embedder, b.schedule, p, control, s, rng));
  return out;
}

fid::FIDReport evaluate_checkpoint(const RunConfig& cfg, const fs::path& ckpt_path,
                                   const vision::DatasetManifest& manifest, bool replay_reference) {
  const auto target_records = manifest.by_domain("jiehua");
  if (target_records.empty()) throw std::runtime_error("eval: no target-style records in manifest");
  std::vector<vision::Image> reference;
  std::vector<vision::EdgeMap> target_edges;
  for (const auto* r : target_records) {
    reference.push_back(vision::load_image(r->image_path));
    target_edges.push_back(vision::load_edge_map(r->edge_path));
  }

  fid::EvalOptions opts;
  opts.repeats = cfg.eval_repeats;
  opts.samples_per_repeat = cfg.eval_samples;
  opts.ref_per_repeat = cfg.eval_ref;
  opts.single_image_mode = cfg.eval_single_image_mode;

  Rng rng(cfg.seed);
  fid::GeneratorFn generator;

  if (replay_reference) {
    generator = [&reference](int count, Rng& r) {
      std::vector<vision::Image> out;
      for (int i = 0; i < count; ++i)
        out.push_back(reference[static_cast<size_t>(r.uniform_int(static_cast<int64_t>(reference.size())))]);
      return out;
    };
    return eval_protocol(generator, reference, opts, rng);
  }

  const std::string variant = checkpoint_variant(ckpt_path);
  if (variant == "cyclegan") {
    const auto source_records = manifest.by_domain("other");
    if (source_records.empty()) throw std::runtime_error("eval: no source-domain records");
    std::vector<vision::Image> sources;
    for (const auto* r : source_records) sources.push_back(vision::load_image(r->image_path));
    auto bundle = std::make_shared<CycleGANBundle>(load_cyclegan(ckpt_path));
    generator = [bundle, sources](int count, Rng& r) {
      std::vector<vision::Image> out;
      for (int i = 0; i < count; ++i) {
        const auto& src = sources[static_cast<size_t>(r.uniform_int(static_cast<int64_t>(sources.size())))];
        out.push_back(cyclegan::translate(*bundle->state, src, cyclegan::Generator::Direction::XtoY));
      }
      return out;
    };
  } else {
    auto bundle = std::make_shared<DiffusionBundle>(load_diffusion(ckpt_path));
    const double guidance = cfg.guidance_scale;
    const std::string prompt = render_prompt(bundle->style_artist);
    auto edges = std::make_shared<std::vector<vision::EdgeMap>>(std::move(target_edges));
    const bool with_control = bundle->graft != nullptr;
    generator = [bundle, edges, prompt, guidance, with_control](int count, Rng& r) {
      std::vector<std::string> prompts(static_cast<size_t>(count), prompt);
      std::vector<const vision::EdgeMap*> controls;
      if (with_control)
        for (int i = 0; i < count; ++i)
          controls.push_back(
              &(*edges)[static_cast<size_t>(r.uniform_int(static_cast<int64_t>(edges->size())))]);
      return diffusion::sample(bundle->model(), *bundle->embedder, bundle->schedule, prompts,
                               controls, guidance, r);
    };
  }
  return eval_protocol(generator, reference, opts, rng);
}

}  // namespace inklab::trainer
