#pragma once

#include <utility>

#include "inklab/image.hpp"
#include "inklab/layers.hpp"
#include "inklab/optim.hpp"
#include "inklab/params.hpp"
#include "inklab/rng.hpp"

namespace inklab::cyclegan {

struct CycleGANConfig {
  int resolution = 64;
  int channels = 3;
  int gen_base = 16;       // generator width
  int disc_base = 16;      // discriminator width
  int res_blocks = 4;
  double lambda_cycle = 10.0;
  double learning_rate = 2e-4;
  float adam_beta1 = 0.5f;
};

/// Encoder / residual / decoder translator. Works on [-1,1] tensors and
/// produces same-shape output in (-1,1) via tanh.
class Generator {
 public:
  enum class Direction { XtoY, YtoX };

  Generator(const CycleGANConfig& cfg, Direction dir, const std::string& name, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  Direction direction() const { return dir_; }
  ParamRegistry& params() { return reg_; }
  const ParamRegistry& params() const { return reg_; }

 private:
  struct Res {
    Conv2d c1, c2;
    GroupNorm n1, n2;
  };
  Direction dir_;
  ParamRegistry reg_;
  Conv2d head_;
  GroupNorm head_n_;
  Conv2d down1_, down2_;
  GroupNorm down1_n_, down2_n_;
  std::vector<Res> blocks_;
  Conv2d up1_, up2_;
  GroupNorm up1_n_, up2_n_;
  Conv2d tail_;
};

/// Patch classifier: probability grid in (0,1), one cell per receptive
/// patch of the input.
class Discriminator {
 public:
  Discriminator(const CycleGANConfig& cfg, const std::string& name, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  ParamRegistry& params() { return reg_; }
  const ParamRegistry& params() const { return reg_; }

 private:
  ParamRegistry reg_;
  Conv2d c1_, c2_, c3_, c4_;
  GroupNorm n2_, n3_;
};

struct CycleGANState {
  CycleGANConfig cfg;
  Generator g_xy;   // G: X -> Y
  Generator f_yx;   // F: Y -> X
  Discriminator d_x;
  Discriminator d_y;
  Adam opt_gen;     // G and F jointly
  Adam opt_disc;    // D_X and D_Y jointly

  explicit CycleGANState(const CycleGANConfig& cfg, Rng& rng);
};

/// disc_loss = -(E[log D(real)] + E[log(1 - D(fake))]) — minimized by the
/// discriminator; gen_loss = -E[log D(fake)] (non-saturating). Log
/// arguments are clamped below at 1e-7.
struct GanLoss {
  Tensor disc;
  Tensor gen;
};
GanLoss gan_loss(const Discriminator& d, const Tensor& real, const Tensor& fake);
/// Same losses from already-computed patch probabilities.
GanLoss gan_loss_from_probs(const Tensor& d_real, const Tensor& d_fake);

/// E|F(G(x)) - x| + E|G(F(y)) - y| (L1).
Tensor cycle_loss(const Generator& g, const Generator& f, const Tensor& x, const Tensor& y);
/// Same loss from already-computed round trips.
Tensor cycle_loss_from_roundtrips(const Tensor& x_round, const Tensor& x, const Tensor& y_round,
                                  const Tensor& y);

/// Adversarial generator terms for both directions plus lambda * cycle.
/// Callers train against it with the discriminators frozen.
Tensor total_generator_loss(CycleGANState& s, const Tensor& x, const Tensor& y);

struct StepReport {
  double disc_x = 0.0;
  double disc_y = 0.0;
  double gen_total = 0.0;
  double cycle = 0.0;
};

/// Alternating update: discriminators on detached fakes first, then both
/// generators with discriminators frozen.
StepReport cyclegan_train_step(CycleGANState& s, const Tensor& x_batch, const Tensor& y_batch,
                               double lr);

/// Run one image through the chosen generator ([0,1] in, [0,1] out).
vision::Image translate(const CycleGANState& s, const vision::Image& img,
                        Generator::Direction dir);

}  // namespace inklab::cyclegan
