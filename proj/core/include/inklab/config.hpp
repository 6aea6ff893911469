#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "inklab/cyclegan.hpp"
#include "inklab/diffusion.hpp"
#include "inklab/optim.hpp"

namespace inklab {

/// Flat key=value run configuration. Fine-tuning hyperparameters default to
/// the reference recipe (learning_rate 5e-6, cosine_with_restarts scheduler,
/// 100 warmup steps, gradient accumulation 5, resolution 64, no EMA).
/// Unknown keys are an error.
struct RunConfig {
  // fine-tuning hyperparameters
  double learning_rate = 5e-6;
  std::string lr_scheduler = "cosine_with_restarts";
  int64_t lr_warmup_steps = 100;
  int gradient_accumulation_steps = 5;
  int resolution = 64;
  bool use_ema = false;  // no EMA machinery exists; true is rejected

  // run control
  uint64_t seed = 42;
  int64_t total_steps = 2000;  // optimizer steps
  int batch_size = 4;
  int64_t checkpoint_every = 1000;
  int64_t cycle_length = 0;  // 0: derived as total_steps - warmup
  int num_restarts = 0;

  // diffusion model
  int diffusion_T = 50;
  double guidance_scale = 3.0;
  int base_channels = 32;
  std::string channel_mults = "1,2,2";
  int time_dim = 64;
  int text_dim = 32;
  int image_channels = 3;
  double prompt_dropout = 0.5;

  // cyclegan
  double lambda_cycle = 10.0;
  double cyclegan_lr = 2e-4;
  int cyclegan_gen_base = 16;
  int cyclegan_disc_base = 16;
  int cyclegan_res_blocks = 4;

  // canny
  double canny_low = 0.1;
  double canny_high = 0.2;

  // evaluation
  int eval_repeats = 10;
  int eval_samples = 64;
  int eval_ref = 0;  // 0: whole reference pool
  bool eval_single_image_mode = false;

  // paths
  std::string manifest;
  std::string run_dir;
  std::string base_checkpoint;

  static RunConfig from_file(const std::filesystem::path& path);

  /// Apply one key=value assignment; unknown keys and malformed values are
  /// errors.
  void set(const std::string& key, const std::string& value);
  void apply(const std::map<std::string, std::string>& overrides);
  void validate() const;

  /// Resolved configuration as sorted key=value lines (defaults included).
  std::string echo() const;

  std::vector<int> mults() const;
  LrSchedule schedule() const;
  diffusion::DenoiserConfig denoiser_config() const;
  cyclegan::CycleGANConfig cyclegan_config() const;
  vision::CannyParams canny_params() const;
};

}  // namespace inklab
