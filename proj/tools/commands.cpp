#include "commands.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include "inklab/checkpoint.hpp"
#include "inklab/config.hpp"
#include "inklab/dataset.hpp"
#include "inklab/trainer.hpp"
#include "plot.hpp"

namespace inklab::cli {

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "key=value config file");
  cmd->add_option("--set", opts.sets, "config override key=value (repeatable; wins over the file)");
  cmd->add_option("--seed", opts.seed, "seed override");
}

RunConfig resolve_config(const CommonOpts& opts) {
  RunConfig cfg = opts.config_path.empty() ? RunConfig{} : RunConfig::from_file(opts.config_path);
  for (const auto& kv : opts.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("--set", "expected key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opts.seed) cfg.seed = *opts.seed;
  return cfg;
}

void print_corpus_stats(const vision::DatasetManifest& manifest) {
  std::map<std::string, int> counts;
  std::map<std::string, double> density;
  for (const auto& r : manifest.records) {
    counts[r.domain]++;
    density[r.domain] += vision::load_edge_map(r.edge_path).density();
  }
  std::cout << "resolution " << manifest.resolution << "\n";
  for (const auto& [dom, n] : counts)
    std::cout << "domain " << dom << ": " << n << " records, mean edge density "
              << density[dom] / n << "\n";
}

std::vector<vision::ArtistRule> parse_artist_rules(const std::vector<std::string>& specs) {
  std::vector<vision::ArtistRule> rules;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("--artists", "expected pattern=name[:domain], got '" + s + "'");
    vision::ArtistRule r;
    r.pattern = s.substr(0, eq);
    std::string rest = s.substr(eq + 1);
    const auto colon = rest.rfind(':');
    if (colon != std::string::npos) {
      r.domain = rest.substr(colon + 1);
      rest.resize(colon);
    }
    r.artist = rest;
    if (r.domain != "jiehua" && r.domain != "other")
      throw CLI::ValidationError("--artists", "domain must be jiehua or other");
    rules.push_back(std::move(r));
  }
  return rules;
}

int cmd_prep_data(const CommonOpts& common, bool synthetic, int per_style, int resolution,
                  const std::string& input_dir, const std::vector<std::string>& artist_specs,
                  const std::string& out_dir) {
  RunConfig cfg = resolve_config(common);
  if (resolution > 0) cfg.resolution = resolution;
  fs::create_directories(out_dir);
  vision::DatasetManifest manifest;
  if (synthetic) {
    Rng rng(cfg.seed);
    manifest = vision::synth_style_corpus(per_style, cfg.resolution, rng, out_dir, cfg.canny_params());
  } else {
    if (input_dir.empty())
      throw CLI::ValidationError("prep-data", "need either --synthetic or --input-dir");
    manifest = vision::build_manifest(input_dir, parse_artist_rules(artist_specs), cfg.resolution,
                                      out_dir, cfg.canny_params());
  }
  const fs::path mpath = fs::path(out_dir) / "manifest.tsv";
  manifest.save(mpath);
  std::cout << "manifest " << mpath.string() << "\n";
  print_corpus_stats(manifest);
  return 0;
}

int cmd_train(const CommonOpts& common, const std::string& variant, const std::string& manifest_path,
              const std::string& run_dir, const std::string& base_ckpt, const std::string& resume,
              bool emit_plots) {
  RunConfig cfg = resolve_config(common);
  const std::string mpath = manifest_path.empty() ? cfg.manifest : manifest_path;
  const std::string rdir = run_dir.empty() ? cfg.run_dir : run_dir;
  if (mpath.empty()) throw CLI::ValidationError("train", "--manifest is required");
  if (rdir.empty()) throw CLI::ValidationError("train", "--run-dir is required");
  const auto manifest = vision::DatasetManifest::load(mpath);

  trainer::TrainResult result;
  if (variant == "diffusion-base") {
    result = trainer::train_diffusion_base(cfg, manifest, rdir, resume);
  } else if (variant == "controlnet") {
    const std::string base = base_ckpt.empty() ? cfg.base_checkpoint : base_ckpt;
    result = trainer::train_controlnet(cfg, manifest, base, rdir, resume);
  } else if (variant == "cyclegan") {
    result = trainer::train_cyclegan(cfg, manifest, rdir, resume);
  } else {
    throw CLI::ValidationError("--variant", "must be diffusion-base, controlnet or cyclegan");
  }
  if (emit_plots) plot_metrics_file(result.metrics_path, fs::path(rdir) / "plot_metrics.ppm");
  std::cout << "checkpoint " << result.final_checkpoint.string() << "\n"
            << "metrics " << result.metrics_path.string() << "\n";
  return 0;
}

int cmd_sample(const CommonOpts& common, const std::string& ckpt, const std::string& prompt,
               const std::string& artist, const std::string& control_path, int n,
               const std::string& out_dir, std::optional<double> guidance) {
  RunConfig cfg = resolve_config(common);
  if (!fs::exists(ckpt)) throw std::runtime_error("missing checkpoint " + ckpt);
  fs::create_directories(out_dir);

  vision::EdgeMap control;
  const bool with_control = !control_path.empty();
  if (with_control) control = vision::load_edge_map(control_path);

  std::string p = prompt;
  if (p.empty() && !artist.empty()) p = trainer::render_prompt(artist);

  const auto images = trainer::sample_checkpoint(ckpt, p, with_control ? &control : nullptr, n,
                                                 guidance, cfg.seed);
  const int64_t step = trainer::load_checkpoint_step(ckpt);
  for (size_t i = 0; i < images.size(); ++i) {
    char name[96];
    std::snprintf(name, sizeof(name), "sample_step%lld_seed%llu_%03zu.ppm",
                  static_cast<long long>(step), static_cast<unsigned long long>(cfg.seed), i);
    const fs::path path = fs::path(out_dir) / name;
    vision::save_image(images[i], path);
    std::cout << path.string() << "\n";
  }
  return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& ckpt, const std::string& manifest_path,
             const std::string& out_path, bool replay_reference, bool emit_plots) {
  RunConfig cfg = resolve_config(common);
  const std::string mpath = manifest_path.empty() ? cfg.manifest : manifest_path;
  if (mpath.empty()) throw CLI::ValidationError("eval", "--manifest is required");
  if (!replay_reference && !fs::exists(ckpt))
    throw std::runtime_error("missing checkpoint " + ckpt);
  const auto manifest = vision::DatasetManifest::load(mpath);

  const auto report = trainer::evaluate_checkpoint(cfg, ckpt, manifest, replay_reference);
  if (!out_path.empty()) {
    atomic_write_text(out_path, report.to_text());
    if (emit_plots)
      render_line_plot({{"fid", report.scores}}, fs::path(out_path).replace_extension(".ppm"));
  }
  std::cout << "mean " << report.mean << "\n";
  return 0;
}

int cmd_print_config(const CommonOpts& common) {
  std::cout << resolve_config(common).echo();
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"desk-scale style-transfer lab: conditional diffusion with a control branch, "
               "CycleGAN, and FID evaluation"};
  app.require_subcommand(1);

  // prep-data
  auto* prep = app.add_subcommand("prep-data", "build a (image, edge, prompt) dataset");
  CommonOpts prep_common;
  add_common(prep, prep_common);
  bool synthetic = false;
  int per_style = 44;
  int resolution = 0;
  std::string input_dir, out_dir;
  std::vector<std::string> artist_specs;
  prep->add_flag("--synthetic", synthetic, "generate the procedural two-style corpus");
  prep->add_option("--per-style", per_style, "images per style for --synthetic");
  prep->add_option("--resolution", resolution, "output resolution (default: config resolution)");
  prep->add_option("--input-dir", input_dir, "ingest images from this directory");
  prep->add_option("--artists", artist_specs, "pattern=name[:domain] rules for --input-dir");
  prep->add_option("--out", out_dir, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train one model variant");
  CommonOpts train_common;
  add_common(train, train_common);
  std::string variant, manifest_path, run_dir, base_ckpt, resume;
  bool emit_plots = false;
  train->add_option("--variant", variant, "diffusion-base | controlnet | cyclegan")->required();
  train->add_option("--manifest", manifest_path, "dataset manifest");
  train->add_option("--run-dir", run_dir, "output directory for this run");
  train->add_option("--base-checkpoint", base_ckpt, "trained diffusion-base checkpoint (controlnet)");
  train->add_option("--resume", resume, "resume from this checkpoint");
  train->add_flag("--emit-plots", emit_plots, "render metric curves to an image file");

  // sample
  auto* sample = app.add_subcommand("sample", "draw images from a checkpoint");
  CommonOpts sample_common;
  add_common(sample, sample_common);
  std::string ckpt, prompt, artist, control_path, sample_out;
  int n = 1;
  std::optional<double> guidance;
  sample->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  auto* popt = sample->add_option("--prompt", prompt, "prompt text");
  sample->add_option("--artist", artist, "artist name for the default prompt template")
      ->excludes(popt);
  sample->add_option("--control", control_path, "edge-map file for control conditioning");
  sample->add_option("--n", n, "number of images");
  sample->add_option("--guidance", guidance, "guidance scale override");
  sample->add_option("--out-dir", sample_out, "output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "FID evaluation of a checkpoint");
  CommonOpts eval_common;
  add_common(eval, eval_common);
  std::string eval_ckpt, eval_manifest, eval_out;
  bool replay_reference = false, eval_plots = false;
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint");
  eval->add_option("--manifest", eval_manifest, "dataset manifest");
  eval->add_option("--out", eval_out, "report file");
  eval->add_flag("--replay-reference", replay_reference,
                 "score the reference set against itself (sanity check)");
  eval->add_flag("--emit-plots", eval_plots, "render per-repeat scores to an image file");

  // print-config
  auto* pc = app.add_subcommand("print-config", "print the resolved configuration");
  CommonOpts pc_common;
  add_common(pc, pc_common);

  try {
    app.parse(argc, argv);
    if (prep->parsed())
      return cmd_prep_data(prep_common, synthetic, per_style, resolution, input_dir, artist_specs,
                           out_dir);
    if (train->parsed())
      return cmd_train(train_common, variant, manifest_path, run_dir, base_ckpt, resume, emit_plots);
    if (sample->parsed())
      return cmd_sample(sample_common, ckpt, prompt, artist, control_path, n, sample_out, guidance);
    if (eval->parsed())
      return cmd_eval(eval_common, eval_ckpt, eval_manifest, eval_out, replay_reference, eval_plots);
    if (pc->parsed()) return cmd_print_config(pc_common);
    return 1;
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("inklab");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace inklab::cli
