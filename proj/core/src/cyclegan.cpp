#include "inklab/cyclegan.hpp"

#include <stdexcept>

#include "inklab/tensor_image.hpp"

namespace inklab::cyclegan {

namespace {

std::vector<Parameter*> gather(std::initializer_list<ParamRegistry*> regs) {
  std::vector<Parameter*> out;
  for (auto* reg : regs)
    for (auto& p : reg->params()) out.push_back(&p);
  return out;
}

}  // namespace

Generator::Generator(const CycleGANConfig& cfg, Direction dir, const std::string& name, Rng& rng)
    : dir_(dir) {
  const int b = cfg.gen_base, c = cfg.channels;
  head_ = Conv2d(reg_, name + ".head", c, b, 7, 1, 3, rng);
  head_n_ = GroupNorm(reg_, name + ".head_n", b, b);  // per-channel: instance norm
  down1_ = Conv2d(reg_, name + ".down1", b, 2 * b, 3, 2, 1, rng);
  down1_n_ = GroupNorm(reg_, name + ".down1_n", 2 * b, 2 * b);
  down2_ = Conv2d(reg_, name + ".down2", 2 * b, 4 * b, 3, 2, 1, rng);
  down2_n_ = GroupNorm(reg_, name + ".down2_n", 4 * b, 4 * b);
  for (int i = 0; i < cfg.res_blocks; ++i) {
    Res r;
    const std::string rn = name + ".res" + std::to_string(i);
    r.c1 = Conv2d(reg_, rn + ".c1", 4 * b, 4 * b, 3, 1, 1, rng);
    r.n1 = GroupNorm(reg_, rn + ".n1", 4 * b, 4 * b);
    r.c2 = Conv2d(reg_, rn + ".c2", 4 * b, 4 * b, 3, 1, 1, rng);
    r.n2 = GroupNorm(reg_, rn + ".n2", 4 * b, 4 * b);
    blocks_.push_back(std::move(r));
  }
  up1_ = Conv2d(reg_, name + ".up1", 4 * b, 2 * b, 3, 1, 1, rng);
  up1_n_ = GroupNorm(reg_, name + ".up1_n", 2 * b, 2 * b);
  up2_ = Conv2d(reg_, name + ".up2", 2 * b, b, 3, 1, 1, rng);
  up2_n_ = GroupNorm(reg_, name + ".up2_n", b, b);
  tail_ = Conv2d(reg_, name + ".tail", b, c, 7, 1, 3, rng);
}

Tensor Generator::operator()(const Tensor& x) const {
  Tensor h = relu(head_n_(head_(x)));
  h = relu(down1_n_(down1_(h)));
  h = relu(down2_n_(down2_(h)));
  for (const auto& r : blocks_) {
    Tensor t = relu(r.n1(r.c1(h)));
    t = r.n2(r.c2(t));
    h = relu(add(t, h));
  }
  h = relu(up1_n_(up1_(nearest_upsample2(h))));
  h = relu(up2_n_(up2_(nearest_upsample2(h))));
  return inklab::tanh(tail_(h));
}

Discriminator::Discriminator(const CycleGANConfig& cfg, const std::string& name, Rng& rng) {
  const int b = cfg.disc_base, c = cfg.channels;
  c1_ = Conv2d(reg_, name + ".c1", c, b, 3, 2, 1, rng);
  c2_ = Conv2d(reg_, name + ".c2", b, 2 * b, 3, 2, 1, rng);
  n2_ = GroupNorm(reg_, name + ".n2", 2 * b, 2 * b);
  c3_ = Conv2d(reg_, name + ".c3", 2 * b, 4 * b, 3, 2, 1, rng);
  n3_ = GroupNorm(reg_, name + ".n3", 4 * b, 4 * b);
  c4_ = Conv2d(reg_, name + ".c4", 4 * b, 1, 3, 1, 1, rng);
}

Tensor Discriminator::operator()(const Tensor& x) const {
  Tensor h = leaky_relu(c1_(x));
  h = leaky_relu(n2_(c2_(h)));
  h = leaky_relu(n3_(c3_(h)));
  return sigmoid(c4_(h));
}

CycleGANState::CycleGANState(const CycleGANConfig& cfg_in, Rng& rng)
    : cfg(cfg_in),
      g_xy(cfg_in, Generator::Direction::XtoY, "g", rng),
      f_yx(cfg_in, Generator::Direction::YtoX, "f", rng),
      d_x(cfg_in, "dx", rng),
      d_y(cfg_in, "dy", rng),
      opt_gen(gather({&g_xy.params(), &f_yx.params()}), AdamConfig{cfg_in.adam_beta1, 0.999f, 1e-8f}),
      opt_disc(gather({&d_x.params(), &d_y.params()}), AdamConfig{cfg_in.adam_beta1, 0.999f, 1e-8f}) {
  if (cfg.lambda_cycle < 0.0) throw std::invalid_argument("CycleGAN: lambda_cycle must be >= 0");
}

GanLoss gan_loss_from_probs(const Tensor& d_real, const Tensor& d_fake) {
  if (d_real.shape() != d_fake.shape())
    throw std::invalid_argument("gan_loss: real " + shape_str(d_real.shape()) + " and fake " +
                                shape_str(d_fake.shape()) + " differ");
  const Tensor ones = Tensor::full(d_fake.shape(), 1.0f);
  GanLoss out;
  Tensor disc = add(mean_all(log_clamped(d_real)), mean_all(log_clamped(sub(ones, d_fake))));
  out.disc = scale(disc, -1.0f);
  out.gen = scale(mean_all(log_clamped(d_fake)), -1.0f);
  return out;
}

GanLoss gan_loss(const Discriminator& d, const Tensor& real, const Tensor& fake) {
  if (real.shape() != fake.shape())
    throw std::invalid_argument("gan_loss: real " + shape_str(real.shape()) + " and fake " +
                                shape_str(fake.shape()) + " differ");
  return gan_loss_from_probs(d(real), d(fake));
}

Tensor cycle_loss_from_roundtrips(const Tensor& x_round, const Tensor& x, const Tensor& y_round,
                                  const Tensor& y) {
  return add(l1(x_round, x), l1(y_round, y));
}

Tensor cycle_loss(const Generator& g, const Generator& f, const Tensor& x, const Tensor& y) {
  return cycle_loss_from_roundtrips(f(g(x)), x, g(f(y)), y);
}

Tensor total_generator_loss(CycleGANState& s, const Tensor& x, const Tensor& y) {
  const Tensor fake_y = s.g_xy(x);
  const Tensor fake_x = s.f_yx(y);
  Tensor adv = add(scale(mean_all(log_clamped(s.d_y(fake_y))), -1.0f),
                   scale(mean_all(log_clamped(s.d_x(fake_x))), -1.0f));
  Tensor cyc = add(l1(s.f_yx(fake_y), x), l1(s.g_xy(fake_x), y));
  return add(adv, scale(cyc, static_cast<float>(s.cfg.lambda_cycle)));
}

StepReport cyclegan_train_step(CycleGANState& s, const Tensor& x_batch, const Tensor& y_batch,
                               double lr) {
  StepReport report;

  // Phase 1: discriminators learn on detached fakes; generators untouched.
  Tensor fake_y, fake_x;
  {
    NoGradGuard detach;
    fake_y = s.g_xy(x_batch);
    fake_x = s.f_yx(y_batch);
  }
  {
    Tape tape;
    GanLoss ly = gan_loss(s.d_y, y_batch, fake_y);
    GanLoss lx = gan_loss(s.d_x, x_batch, fake_x);
    report.disc_x = lx.disc.item();
    report.disc_y = ly.disc.item();
    Tensor total = add(lx.disc, ly.disc);
    backward(total);
  }
  s.opt_disc.step(lr);

  // Phase 2: generators; discriminators stay frozen through backward so no
  // gradient lands on them.
  {
    Tape tape;
    FreezeGuard freeze({&s.d_x.params(), &s.d_y.params()});
    const Tensor gy = s.g_xy(x_batch);
    const Tensor gx = s.f_yx(y_batch);
    Tensor adv = add(scale(mean_all(log_clamped(s.d_y(gy))), -1.0f),
                     scale(mean_all(log_clamped(s.d_x(gx))), -1.0f));
    Tensor cyc = add(l1(s.f_yx(gy), x_batch), l1(s.g_xy(gx), y_batch));
    Tensor total = add(adv, scale(cyc, static_cast<float>(s.cfg.lambda_cycle)));
    report.cycle = cyc.item();
    report.gen_total = total.item();
    backward(total);
  }
  s.opt_gen.step(lr);
  return report;
}

vision::Image translate(const CycleGANState& s, const vision::Image& img,
                        Generator::Direction dir) {
  NoGradGuard no_grad;
  const Tensor x = images_to_pm1({&img});
  const Tensor y = dir == Generator::Direction::XtoY ? s.g_xy(x) : s.f_yx(x);
  return pm1_to_image(y, 0);
}

}  // namespace inklab::cyclegan
