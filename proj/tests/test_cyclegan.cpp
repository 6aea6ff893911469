#include <doctest.h>

#include <cmath>

#include "inklab/cyclegan.hpp"
#include "inklab/tensor_image.hpp"

using namespace inklab;
using namespace inklab::cyclegan;

namespace {

CycleGANConfig tiny_config() {
  CycleGANConfig cfg;
  cfg.resolution = 16;
  cfg.channels = 1;
  cfg.gen_base = 4;
  cfg.disc_base = 4;
  cfg.res_blocks = 1;
  cfg.lambda_cycle = 10.0;
  return cfg;
}

Tensor random_pm1(int b, int c, int hw, Rng& rng) {
  Tensor x = Tensor::zeros({b, c, hw, hw});
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return x;
}

}  // namespace

TEST_CASE("gan loss closed forms") {
  SUBCASE("an indifferent discriminator (p=0.5) gives disc 2ln2 and gen ln2") {
    const Tensor half_r = Tensor::full({2, 1, 3, 3}, 0.5f);
    const Tensor half_f = Tensor::full({2, 1, 3, 3}, 0.5f);
    const GanLoss l = gan_loss_from_probs(half_r, half_f);
    CHECK(l.disc.item() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-5));
    CHECK(l.gen.item() == doctest::Approx(std::log(2.0)).epsilon(1e-5));
  }
  SUBCASE("a perfect discriminator drives disc_loss to zero") {
    const Tensor real = Tensor::full({4}, 1.0f - 1e-7f);
    const Tensor fake = Tensor::full({4}, 1e-7f);
    const GanLoss l = gan_loss_from_probs(real, fake);
    CHECK(l.disc.item() == doctest::Approx(0.0).epsilon(1e-5));
    CHECK(std::isfinite(l.gen.item()));  // clamped log keeps it finite
  }
  SUBCASE("clamping keeps losses finite even at exact 0/1 probabilities") {
    const Tensor zeros = Tensor::zeros({4});
    const Tensor ones = Tensor::full({4}, 1.0f);
    const GanLoss l = gan_loss_from_probs(zeros, ones);
    CHECK(std::isfinite(l.disc.item()));
    CHECK(std::isfinite(l.gen.item()));
  }
  SUBCASE("the network path gives p=0.5 exactly when the head conv is zeroed") {
    CycleGANConfig cfg = tiny_config();
    Rng rng(3);
    Discriminator d(cfg, "d", rng);
    d.params().find("d.c4.w")->value.data().assign(
        d.params().find("d.c4.w")->value.data().size(), 0.0f);
    const Tensor batch = random_pm1(2, 1, 16, rng);
    const GanLoss l = gan_loss(d, batch, batch);
    CHECK(l.disc.item() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-5));
  }
}

TEST_CASE("cycle loss closed forms and the recomputation oracle") {
  Rng rng(5);
  SUBCASE("identity round trips cost nothing") {
    const Tensor x = random_pm1(2, 1, 8, rng);
    const Tensor y = random_pm1(2, 1, 8, rng);
    CHECK(cycle_loss_from_roundtrips(x, x, y, y).item() == 0.0f);
  }
  SUBCASE("a constant offset of 0.1 costs exactly 0.1") {
    const Tensor x = random_pm1(2, 1, 8, rng);
    const Tensor y = random_pm1(2, 1, 8, rng);
    Tensor x_shift = x.clone_detached();
    for (auto& v : x_shift.data()) v += 0.1f;
    CHECK(cycle_loss_from_roundtrips(x_shift, x, y, y).item() == doctest::Approx(0.1).epsilon(1e-5));
  }
  SUBCASE("random nets match an independent recomputation") {
    CycleGANConfig cfg = tiny_config();
    Rng nrng(7);
    Generator g(cfg, Generator::Direction::XtoY, "g", nrng);
    Generator f(cfg, Generator::Direction::YtoX, "f", nrng);
    const Tensor x = random_pm1(2, 1, 16, nrng);
    const Tensor y = random_pm1(2, 1, 16, nrng);

    const double got = cycle_loss(g, f, x, y).item();

    NoGradGuard ng;
    const Tensor xr = f(g(x));
    const Tensor yr = g(f(y));
    double acc = 0.0;
    for (size_t i = 0; i < xr.data().size(); ++i)
      acc += std::abs(static_cast<double>(xr.data()[i]) - x.data()[i]);
    acc /= static_cast<double>(xr.data().size());
    double acc2 = 0.0;
    for (size_t i = 0; i < yr.data().size(); ++i)
      acc2 += std::abs(static_cast<double>(yr.data()[i]) - y.data()[i]);
    acc2 /= static_cast<double>(yr.data().size());
    CHECK(got == doctest::Approx(acc + acc2).epsilon(1e-6));
  }
}

TEST_CASE("total generator loss: lambda scaling is affine") {
  Rng rng(9);
  CycleGANConfig cfg = tiny_config();
  Rng srng(11);
  CycleGANState s(cfg, srng);
  const Tensor x = random_pm1(2, 1, 16, rng);
  const Tensor y = random_pm1(2, 1, 16, rng);

  auto total_at = [&](double lambda) {
    s.cfg.lambda_cycle = lambda;
    NoGradGuard ng;
    return static_cast<double>(total_generator_loss(s, x, y).item());
  };
  const double t0 = total_at(0.0);
  const double t10 = total_at(10.0);
  const double t20 = total_at(20.0);
  // lambda=0 leaves only the adversarial part; doubling lambda doubles the rest
  CHECK(t20 - t0 == doctest::Approx(2.0 * (t10 - t0)).epsilon(1e-4));
  CHECK(t10 - t0 > 0.0);  // random nets have nonzero cycle loss
}

TEST_CASE("alternating step freezes the right sub-models per phase") {
  CycleGANConfig cfg = tiny_config();
  Rng rng(13);
  CycleGANState s(cfg, rng);
  const Tensor x = random_pm1(2, 1, 16, rng);
  const Tensor y = random_pm1(2, 1, 16, rng);

  // phase-1 style update: fakes detached, so no generator gradients
  {
    NoGradGuard detach;
    const Tensor fy = s.g_xy(x);
    Tape tape;
    (void)tape;
  }
  {
    Tensor fy, fx;
    {
      NoGradGuard detach;
      fy = s.g_xy(x);
      fx = s.f_yx(y);
    }
    Tape tape;
    const GanLoss ly = gan_loss(s.d_y, y, fy);
    const GanLoss lx = gan_loss(s.d_x, x, fx);
    backward(add(lx.disc, ly.disc));
    for (const auto& p : s.g_xy.params().params()) CHECK_FALSE(p.value.has_grad());
    for (const auto& p : s.f_yx.params().params()) CHECK_FALSE(p.value.has_grad());
    bool any_d = false;
    for (const auto& p : s.d_x.params().params()) any_d |= p.value.has_grad();
    CHECK(any_d);
    s.d_x.params().zero_all_grads();
    s.d_y.params().zero_all_grads();
  }

  // phase-2 style update: discriminators frozen through backward
  {
    Tape tape;
    FreezeGuard freeze({&s.d_x.params(), &s.d_y.params()});
    backward(total_generator_loss(s, x, y));
    for (const auto& p : s.d_x.params().params()) CHECK_FALSE(p.value.has_grad());
    for (const auto& p : s.d_y.params().params()) CHECK_FALSE(p.value.has_grad());
    bool any_g = false;
    for (const auto& p : s.g_xy.params().params()) any_g |= p.value.has_grad();
    CHECK(any_g);
    s.g_xy.params().zero_all_grads();
    s.f_yx.params().zero_all_grads();
  }

  // a full step leaves every loss component finite and is deterministic
  Rng r1(21), r2(21);
  CycleGANState s1(cfg, r1), s2(cfg, r2);
  for (int i = 0; i < 3; ++i) {
    const auto rep1 = cyclegan_train_step(s1, x, y, cfg.learning_rate);
    const auto rep2 = cyclegan_train_step(s2, x, y, cfg.learning_rate);
    CHECK(std::isfinite(rep1.disc_x));
    CHECK(std::isfinite(rep1.disc_y));
    CHECK(std::isfinite(rep1.gen_total));
    CHECK(std::isfinite(rep1.cycle));
    CHECK(rep1.cycle == rep2.cycle);
  }
  for (size_t i = 0; i < s1.g_xy.params().size(); ++i)
    CHECK(s1.g_xy.params().params()[i].value.data() == s2.g_xy.params().params()[i].value.data());
}

TEST_CASE("translate preserves shape and produces valid untrained output") {
  CycleGANConfig cfg = tiny_config();
  Rng rng(17);
  CycleGANState s(cfg, rng);

  vision::Image img = vision::Image::zeros(16, 16, 1);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());

  const vision::Image out = translate(s, img, Generator::Direction::XtoY);
  CHECK(out.height == img.height);
  CHECK(out.width == img.width);
  CHECK(out.channels == img.channels);
  for (float v : out.pixels) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  const vision::Image back = translate(s, out, Generator::Direction::YtoX);
  CHECK(back.height == img.height);
}

TEST_CASE("short training shrinks the cycle loss on an easy corpus") {
  CycleGANConfig cfg = tiny_config();
  cfg.learning_rate = 5e-4;
  Rng rng(19);
  CycleGANState s(cfg, rng);

  // two flat domains; reconstruction is easy to learn
  Tensor x = Tensor::full({2, 1, 16, 16}, -0.5f);
  Tensor y = Tensor::full({2, 1, 16, 16}, 0.5f);

  double first = 0.0, last = 0.0;
  const int steps = 120;
  for (int i = 0; i < steps; ++i) {
    const auto rep = cyclegan_train_step(s, x, y, cfg.learning_rate);
    if (i < 10) first += rep.cycle;
    if (i >= steps - 10) last += rep.cycle;
  }
  CHECK(last < first);
}
