#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "inklab/config.hpp"
#include "inklab/controlnet.hpp"
#include "inklab/cyclegan.hpp"
#include "inklab/dataset.hpp"
#include "inklab/diffusion.hpp"
#include "inklab/fid.hpp"

namespace inklab::trainer {

/// Evaluation prompt template; {artist} is replaced by the style name.
inline constexpr const char* kEvalPromptTemplate =
    "Green grasslands, Grey sky, People in bright colours, {artist} style";

std::string render_prompt(const std::string& artist);

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics_path;
  std::vector<double> step_losses;  // main objective, one per optimizer step
};

/// Train the tiny conditional diffusion model from scratch on the corpus
/// (prompt dropout applied, no control input).
TrainResult train_diffusion_base(const RunConfig& cfg, const vision::DatasetManifest& manifest,
                                 const std::filesystem::path& run_dir,
                                 const std::filesystem::path& resume = {});

/// Graft a control branch onto a previously trained base checkpoint and
/// fine-tune it on (image, edge, prompt) triplets. The base (including the
/// prompt table) stays locked throughout.
TrainResult train_controlnet(const RunConfig& cfg, const vision::DatasetManifest& manifest,
                             const std::filesystem::path& base_checkpoint,
                             const std::filesystem::path& run_dir,
                             const std::filesystem::path& resume = {});

/// Unpaired translation between domain X (other) and domain Y (jiehua).
TrainResult train_cyclegan(const RunConfig& cfg, const vision::DatasetManifest& manifest,
                           const std::filesystem::path& run_dir,
                           const std::filesystem::path& resume = {});

/// A diffusion checkpoint loaded back into runnable form. `graft` is set
/// for controlnet checkpoints; `model()` picks the right eps predictor.
struct DiffusionBundle {
  std::unique_ptr<diffusion::Denoiser> denoiser;
  std::unique_ptr<diffusion::TextEmbedder> embedder;
  std::unique_ptr<controlnet::GraftedDenoiser> graft;
  diffusion::NoiseSchedule schedule;
  std::string variant;
  std::string style_artist;  // target-style name stored at training time
  int64_t trained_steps = 0;
  double guidance_scale = 3.0;

  const diffusion::EpsModel& model() const;
};

struct CycleGANBundle {
  std::unique_ptr<cyclegan::CycleGANState> state;
  int64_t trained_steps = 0;
};

std::string checkpoint_variant(const std::filesystem::path& ckpt);
int64_t load_checkpoint_step(const std::filesystem::path& ckpt);
DiffusionBundle load_diffusion(const std::filesystem::path& ckpt);
CycleGANBundle load_cyclegan(const std::filesystem::path& ckpt);

/// Draw n images from a checkpoint. Diffusion variants sample with
/// classifier-free guidance (controlnet ones condition on `control` when
/// given); a cyclegan checkpoint translates `control`-independent inputs is
/// not supported here - use eval or translate directly.
std::vector<vision::Image> sample_checkpoint(const std::filesystem::path& ckpt,
                                             const std::string& prompt,
                                             const vision::EdgeMap* control, int n,
                                             std::optional<double> guidance_scale, uint64_t seed);

/// Variant-aware FID evaluation against the manifest's target-style
/// records: diffusion models generate (controlnet grafts condition on edge
/// maps drawn from the target domain), cyclegan translates source-domain
/// images. `replay_reference` scores the reference set against itself.
fid::FIDReport evaluate_checkpoint(const RunConfig& cfg, const std::filesystem::path& ckpt,
                                   const vision::DatasetManifest& manifest,
                                   bool replay_reference = false);

}  // namespace inklab::trainer
