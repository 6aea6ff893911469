#pragma once

#include "inklab/diffusion.hpp"

namespace inklab::controlnet {

/// Locked base denoiser plus a trainable control branch. The branch is a
/// bitwise copy of the base down path and middle block; the edge condition
/// enters through a hint encoder and an input zero convolution, and each
/// branch output reaches the base through its own output zero convolution,
/// so an untrained graft reproduces the base output exactly.
class GraftedDenoiser : public diffusion::EpsModel {
 public:
  /// Locks every base parameter and builds the branch. The base must
  /// outlive the graft.
  static GraftedDenoiser graft(diffusion::Denoiser& base, Rng& rng);

  /// y = base(z,t,text) plus zero-conv projected branch contributions at
  /// every up-path skip junction and the middle block. Null control skips
  /// the branch entirely.
  Tensor forward(const Tensor& z, const std::vector<int>& tsteps, const Tensor& text_emb,
                 const Tensor* control) const;

  Tensor predict_eps(const Tensor& z, const std::vector<int>& tsteps, const Tensor& text_emb,
                     const Tensor* control) const override {
    return forward(z, tsteps, text_emb, control);
  }
  const diffusion::DenoiserConfig& config() const override { return base_->config(); }

  diffusion::Denoiser& base() { return *base_; }
  const diffusion::Denoiser& base() const { return *base_; }
  ParamRegistry& branch_params() { return reg_; }
  const ParamRegistry& branch_params() const { return reg_; }

  /// Names of the zero-convolution parameters inside branch_params().
  std::vector<std::string> zero_conv_param_names() const;

 private:
  explicit GraftedDenoiser(diffusion::Denoiser& base) : base_(&base) {}

  diffusion::Denoiser* base_ = nullptr;
  ParamRegistry reg_;
  diffusion::Denoiser::Core branch_;
  Conv2d hint1_, hint2_, hint3_;      // EdgeMap -> branch entry features
  Conv2d zero_in_;                    // Z(c; theta_z1)
  std::vector<Conv2d> zero_skips_;    // Z(.; theta_z2), one per level
  Conv2d zero_mid_;
};

/// One fine-tune tape: the diffusion objective through the grafted forward
/// with the batch's edge maps as control (an all-zero map when the batch
/// carries none). Gradients land in the branch only; a gradient on any
/// locked base parameter is reported as a contract breach.
double finetune_step(const GraftedDenoiser& g, const diffusion::TextEmbedder& embedder,
                     const diffusion::NoiseSchedule& ns, const diffusion::Batch& batch, Rng& rng);

}  // namespace inklab::controlnet
