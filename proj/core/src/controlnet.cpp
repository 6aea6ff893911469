#include "inklab/controlnet.hpp"

#include <stdexcept>

namespace inklab::controlnet {

using diffusion::Denoiser;

GraftedDenoiser GraftedDenoiser::graft(Denoiser& base, Rng& rng) {
  GraftedDenoiser g(base);
  const auto& cfg = base.config();
  const auto ch = cfg.level_channels();
  const int L = cfg.levels();

  // Branch core mirrors the base core layer for layer (same parameter
  // names, so the bitwise copy below can match them up).
  g.branch_.conv_in = Conv2d(g.reg_, "in", cfg.channels, ch[0], 3, 1, 1, rng);
  int cur = ch[0];
  for (int i = 0; i < L; ++i) {
    g.branch_.down.emplace_back(g.reg_, "down" + std::to_string(i), cur, ch[static_cast<size_t>(i)],
                                cfg.time_dim, rng);
    cur = ch[static_cast<size_t>(i)];
  }
  g.branch_.mid = diffusion::ResBlock(g.reg_, "mid", cur, cur, cfg.time_dim, rng);

  // Hint encoder maps the 1-channel edge image to the branch entry
  // resolution (the graft runs in pixel space, so no spatial reduction).
  g.hint1_ = Conv2d(g.reg_, "hint1", 1, 8, 3, 1, 1, rng);
  g.hint2_ = Conv2d(g.reg_, "hint2", 8, 16, 3, 1, 1, rng);
  g.hint3_ = Conv2d(g.reg_, "hint3", 16, ch[0], 3, 1, 1, rng);

  g.zero_in_ = Conv2d::zero_conv(g.reg_, "zin", ch[0], ch[0]);
  for (int i = 0; i < L; ++i)
    g.zero_skips_.push_back(Conv2d::zero_conv(g.reg_, "zskip" + std::to_string(i),
                                              ch[static_cast<size_t>(i)], ch[static_cast<size_t>(i)]));
  g.zero_mid_ = Conv2d::zero_conv(g.reg_, "zmid", ch.back(), ch.back());

  // Trainable copy: branch blocks start bitwise equal to the base.
  for (auto& p : g.reg_.params())
    if (const Parameter* bp = base.params().find(p.name)) p.value.data() = bp->value.data();

  base.params().lock_all();
  return g;
}

Tensor GraftedDenoiser::forward(const Tensor& z, const std::vector<int>& tsteps,
                                const Tensor& text_emb, const Tensor* control) const {
  if (!control) return base_->forward(z, tsteps, text_emb, nullptr);

  const auto& cfg = base_->config();
  if (control->ndim() != 4 || control->dim(0) != z.dim(0) || control->dim(1) != 1 ||
      control->dim(2) != cfg.resolution || control->dim(3) != cfg.resolution)
    throw std::invalid_argument("GraftedDenoiser: control " + shape_str(control->shape()) +
                                " does not match resolution " + std::to_string(cfg.resolution));

  const Tensor temb = base_->time_text_embedding(tsteps, text_emb);

  Tensor hint = silu(hint1_(*control));
  hint = silu(hint2_(hint));
  hint = hint3_(hint);
  const Tensor entry = zero_in_(hint);

  const auto branch_out = Denoiser::run_core(branch_, z, temb, &entry);

  Denoiser::Injections inj;
  for (size_t i = 0; i < branch_out.skips.size(); ++i)
    inj.skips.push_back(zero_skips_[i](branch_out.skips[i]));
  inj.middle = zero_mid_(branch_out.middle);

  return base_->forward(z, tsteps, text_emb, &inj);
}

std::vector<std::string> GraftedDenoiser::zero_conv_param_names() const {
  std::vector<std::string> names{"zin.w", "zin.b", "zmid.w", "zmid.b"};
  for (size_t i = 0; i < zero_skips_.size(); ++i) {
    names.push_back("zskip" + std::to_string(i) + ".w");
    names.push_back("zskip" + std::to_string(i) + ".b");
  }
  return names;
}

double finetune_step(const GraftedDenoiser& g, const diffusion::TextEmbedder& embedder,
                     const diffusion::NoiseSchedule& ns, const diffusion::Batch& batch, Rng& rng) {
  for (const auto& p : g.base().params().params())
    if (!p.locked)
      throw std::logic_error("finetune_step: base parameter " + p.name + " is not locked");

  diffusion::Batch b = batch;
  if (!b.control.defined()) {
    const auto& cfg = g.config();
    b.control = Tensor::zeros({b.z0.dim(0), 1, cfg.resolution, cfg.resolution});
  }

  Tape tape;
  Tensor loss = diffusion_loss(g, embedder, ns, b, rng);
  backward(loss);

  for (const auto& p : g.base().params().params())
    if (p.value.has_grad())
      throw std::logic_error("finetune_step: gradient reached locked base parameter " + p.name);

  return loss.item();
}

}  // namespace inklab::controlnet
