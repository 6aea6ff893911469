#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "inklab/dataset.hpp"
#include "inklab/layers.hpp"
#include "inklab/params.hpp"
#include "inklab/rng.hpp"
#include "inklab/tensor.hpp"

namespace inklab::diffusion {

struct NoiseSchedule {
  int T = 0;
  std::vector<float> beta;
  std::vector<float> alpha;
  std::vector<float> alpha_bar;  // strictly decreasing cumulative product
};

/// Linear beta interpolation between the two endpoints.
NoiseSchedule make_schedule(int T, double beta_start, double beta_end);
/// Default schedule: 1e-4 .. 0.02 endpoints scaled by 1000/T so the terminal
/// alpha_bar stays near zero at desk-scale step counts.
NoiseSchedule default_schedule(int T);

/// z_t = sqrt(alpha_bar[t]) * z0 + sqrt(1 - alpha_bar[t]) * eps.
Tensor forward_diffuse(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& ns);
/// Batched variant with one timestep per item of a [B,C,H,W] tensor.
Tensor forward_diffuse(const Tensor& z0, const std::vector<int>& t, const Tensor& eps,
                       const NoiseSchedule& ns);

/// Toy prompt embedding table standing in for a text encoder: lowercase
/// whitespace tokens, mean-pooled learned rows, plus one dedicated row for
/// the empty (null) prompt. Unknown words fall back to the null row.
class TextEmbedder {
 public:
  TextEmbedder(std::vector<std::string> vocab, int dim, Rng& rng);

  static std::vector<std::string> vocab_from_prompts(const std::vector<std::string>& prompts);

  std::vector<int> tokenize(const std::string& prompt) const;
  /// [B, dim]; encode("") is exactly the null embedding row.
  Tensor encode_batch(const std::vector<std::string>& prompts) const;
  Tensor encode(const std::string& prompt) const { return encode_batch({prompt}); }

  int dim() const { return dim_; }
  int null_id() const { return static_cast<int>(vocab_.size()); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  ParamRegistry& params() { return reg_; }
  const ParamRegistry& params() const { return reg_; }

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
  int dim_;
  ParamRegistry reg_;
  Tensor table_;  // [vocab+1, dim]
};

struct DenoiserConfig {
  int resolution = 64;
  int channels = 3;
  int base_channels = 32;
  std::vector<int> channel_mults{1, 2, 2};
  int time_dim = 64;
  int text_dim = 32;

  int levels() const { return static_cast<int>(channel_mults.size()); }
  std::vector<int> level_channels() const;
  void validate() const;
};

/// Common eps-prediction interface for the plain denoiser and grafted
/// variants; `control` is a [B,1,H,W] edge tensor or null.
class EpsModel {
 public:
  virtual ~EpsModel() = default;
  virtual Tensor predict_eps(const Tensor& z, const std::vector<int>& tsteps,
                             const Tensor& text_emb, const Tensor* control) const = 0;
  virtual const DenoiserConfig& config() const = 0;
};

struct ResBlock {
  GroupNorm gn1;
  Conv2d conv1;
  Linear temb_proj;
  GroupNorm gn2;
  Conv2d conv2;
  Conv2d skip;
  bool channel_change = false;

  ResBlock() = default;
  ResBlock(ParamRegistry& reg, const std::string& name, int in_ch, int out_ch, int time_dim,
           Rng& rng);
  Tensor operator()(const Tensor& x, const Tensor& temb) const;
};

/// Small conditional U-Net predicting the noise from (z_t, t, text). The
/// down path and middle block are grouped so a control branch can mirror
/// them; per-level skip activations and the middle output accept additive
/// injections from such a branch.
class Denoiser : public EpsModel {
 public:
  struct Core {
    Conv2d conv_in;
    std::vector<ResBlock> down;
    ResBlock mid;
  };
  struct CoreOut {
    std::vector<Tensor> skips;
    Tensor middle;
  };
  struct Injections {
    std::vector<Tensor> skips;  // one per level, matching skip shapes
    Tensor middle;
  };

  Denoiser(const DenoiserConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& z, const std::vector<int>& tsteps, const Tensor& text_emb,
                 const Injections* inj = nullptr) const;

  Tensor predict_eps(const Tensor& z, const std::vector<int>& tsteps, const Tensor& text_emb,
                     const Tensor* control) const override;

  /// Run a core (this model's or a branch copy) over the down path:
  /// h = conv_in(z) [+ entry_extra], then per-level blocks and the middle.
  Tensor time_text_embedding(const std::vector<int>& tsteps, const Tensor& text_emb) const;
  static CoreOut run_core(const Core& core, const Tensor& z, const Tensor& temb,
                          const Tensor* entry_extra);

  const DenoiserConfig& config() const override { return cfg_; }
  const Core& core() const { return core_; }
  ParamRegistry& params() { return reg_; }
  const ParamRegistry& params() const { return reg_; }

 private:
  DenoiserConfig cfg_;
  ParamRegistry reg_;
  Core core_;
  Linear time1_, time2_, text_proj_;
  std::vector<ResBlock> up_;  // deepest level first
  GroupNorm out_gn_;
  Conv2d out_conv_;
};

/// Assembled training batch; prompts have already been through dropout.
struct Batch {
  Tensor z0;                         // [B,C,H,W] in [-1,1]
  std::vector<std::string> prompts;  // size B
  Tensor control;                    // [B,1,H,W]; undefined when unused
};

Batch assemble_batch(const std::vector<const vision::TripletSample*>& samples, double dropout_p,
                     bool with_control, Rng& rng);

/// Denoising objective: draw one uniform timestep and one Gaussian noise per
/// item, form z_t, and return mean squared error between the drawn noise and
/// the model prediction (on the current tape).
Tensor diffusion_loss(const EpsModel& model, const TextEmbedder& embedder, const NoiseSchedule& ns,
                      const Batch& batch, Rng& rng);

/// Runs one tape: loss forward + backward. Gradients are left on the
/// parameters for the caller's optimizer / accumulator.
double diffusion_train_step(const EpsModel& model, const TextEmbedder& embedder,
                            const NoiseSchedule& ns, const Batch& batch, Rng& rng);

/// Ancestral sampling with classifier-free guidance: per step the guided
/// noise is eps_uncond + s * (eps_cond - eps_uncond); s==1 uses the
/// conditional branch alone and s==0 the unconditional one.
std::vector<vision::Image> sample(const EpsModel& model, const TextEmbedder& embedder,
                                  const NoiseSchedule& ns, const std::vector<std::string>& prompts,
                                  const std::vector<const vision::EdgeMap*>& controls,
                                  double guidance_scale, Rng& rng);

vision::Image sample_one(const EpsModel& model, const TextEmbedder& embedder,
                         const NoiseSchedule& ns, const std::string& prompt,
                         const vision::EdgeMap* control, double guidance_scale, Rng& rng);

}  // namespace inklab::diffusion
