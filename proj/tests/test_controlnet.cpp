#include <doctest.h>

#include <cmath>

#include "inklab/controlnet.hpp"
#include "inklab/optim.hpp"

using namespace inklab;
using namespace inklab::diffusion;
using namespace inklab::controlnet;

namespace {

DenoiserConfig tiny_config() {
  DenoiserConfig cfg;
  cfg.resolution = 8;
  cfg.channels = 1;
  cfg.base_channels = 8;
  cfg.channel_mults = {1, 2};
  cfg.time_dim = 8;
  cfg.text_dim = 4;
  return cfg;
}

struct Fixture {
  DenoiserConfig cfg = tiny_config();
  Rng rng{101};
  TextEmbedder emb{{"ruled", "style"}, cfg.text_dim, rng};
  Denoiser base{cfg, rng};
  GraftedDenoiser graft = GraftedDenoiser::graft(base, rng);
  NoiseSchedule ns = default_schedule(6);

  Tensor random_z(int b, Rng& r) {
    Tensor z = Tensor::zeros({b, cfg.channels, cfg.resolution, cfg.resolution});
    r.fill_normal(z.data());
    return z;
  }
  Tensor random_control(int b, Rng& r) {
    Tensor c = Tensor::zeros({b, 1, cfg.resolution, cfg.resolution});
    for (auto& v : c.data()) v = r.uniform() < 0.3 ? 1.0f : 0.0f;
    return c;
  }
  vision::TripletSample sample_with_edges(Rng& r) {
    vision::TripletSample s;
    s.image = vision::Image::zeros(cfg.resolution, cfg.resolution, 1);
    for (auto& p : s.image.pixels) p = static_cast<float>(r.uniform());
    s.edge = vision::EdgeMap::zeros(cfg.resolution, cfg.resolution);
    for (auto& p : s.edge.pixels) p = r.uniform() < 0.2 ? 1.0f : 0.0f;
    s.prompt = "ruled style";
    return s;
  }
};

}  // namespace

TEST_CASE("graft: zero convs start at exactly zero and blocks are bitwise copies") {
  Fixture f;

  for (const auto& name : f.graft.zero_conv_param_names()) {
    const Parameter* p = f.graft.branch_params().find(name);
    REQUIRE(p != nullptr);
    for (float v : p->value.data()) CHECK(v == 0.0f);
  }

  int copied = 0;
  for (const auto& p : f.graft.branch_params().params()) {
    const Parameter* bp = f.base.params().find(p.name);
    if (!bp) continue;  // hint encoder / zero convs are branch-only
    ++copied;
    CHECK(p.value.data() == bp->value.data());
  }
  CHECK(copied > 4);

  for (const auto& p : f.base.params().params()) {
    CHECK(p.locked);
    CHECK_FALSE(p.value.requires_grad());
  }
  for (const auto& p : f.graft.branch_params().params()) {
    CHECK_FALSE(p.locked);
    CHECK(p.value.requires_grad());
  }
}

TEST_CASE("identity at initialization over 100 random inputs") {
  Fixture f;
  Rng r(7);
  double max_abs = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Tensor z = f.random_z(1, r);
    const Tensor ctrl = f.random_control(1, r);
    const std::vector<int> t{static_cast<int>(r.uniform_int(f.ns.T))};
    const Tensor text = f.emb.encode_batch({i % 2 == 0 ? "ruled style" : ""});

    const Tensor grafted = f.graft.forward(z, t, text, &ctrl);
    const Tensor plain = f.base.forward(z, t, text, nullptr);
    REQUIRE(grafted.shape() == plain.shape());
    for (size_t j = 0; j < grafted.data().size(); ++j)
      max_abs = std::max(max_abs,
                         std::abs(static_cast<double>(grafted.data()[j]) - plain.data()[j]));
  }
  CHECK(max_abs == 0.0);
}

TEST_CASE("absent control bypasses the branch entirely") {
  Fixture f;
  Rng r(9);
  const Tensor z = f.random_z(2, r);
  const Tensor text = f.emb.encode_batch({"ruled style", ""});
  const Tensor a = f.graft.forward(z, {1, 3}, text, nullptr);
  const Tensor b = f.base.forward(z, {1, 3}, text, nullptr);
  CHECK(a.data() == b.data());
}

TEST_CASE("perturbing one outer zero conv breaks the identity") {
  Fixture f;
  Rng r(11);
  Parameter* zc = f.graft.branch_params().find("zmid.w");
  REQUIRE(zc != nullptr);
  zc->value.data()[0] = 0.05f;

  const Tensor z = f.random_z(1, r);
  const Tensor ctrl = f.random_control(1, r);
  const Tensor text = f.emb.encode_batch({"ruled style"});
  const Tensor grafted = f.graft.forward(z, {2}, text, &ctrl);
  const Tensor plain = f.base.forward(z, {2}, text, nullptr);
  double diff = 0.0;
  for (size_t j = 0; j < grafted.data().size(); ++j)
    diff += std::abs(static_cast<double>(grafted.data()[j]) - plain.data()[j]);
  CHECK(diff > 0.0);
}

TEST_CASE("control resolution mismatches are rejected") {
  Fixture f;
  Rng r(13);
  const Tensor z = f.random_z(1, r);
  Tensor bad = Tensor::zeros({1, 1, 4, 4});
  const Tensor text = f.emb.encode_batch({"ruled style"});
  CHECK_THROWS_WITH_AS(f.graft.forward(z, {0}, text, &bad), doctest::Contains("control"),
                       std::invalid_argument);
}

TEST_CASE("fine-tuning moves zero convs off zero while conserving the base bitwise") {
  Fixture f;
  f.emb.params().lock_all();
  Rng r(17);

  std::vector<std::vector<float>> base_before;
  for (const auto& p : f.base.params().params()) base_before.push_back(p.value.data());
  std::vector<std::vector<float>> emb_before;
  for (const auto& p : f.emb.params().params()) emb_before.push_back(p.value.data());

  Adam opt(f.graft.branch_params());

  std::vector<vision::TripletSample> pool{f.sample_with_edges(r), f.sample_with_edges(r)};
  auto one_step = [&] {
    std::vector<const vision::TripletSample*> ptrs{&pool[0], &pool[1]};
    const Batch batch = assemble_batch(ptrs, 0.5, /*with_control=*/true, r);
    const double loss = finetune_step(f.graft, f.emb, f.ns, batch, r);
    opt.step(1e-3);
    return loss;
  };

  one_step();
  // after one step: at least one zero-conv parameter moved off zero
  double zc_norm = 0.0;
  for (const auto& name : f.graft.zero_conv_param_names())
    for (float v : f.graft.branch_params().find(name)->value.data()) zc_norm += std::abs(v);
  CHECK(zc_norm > 0.0);

  for (int i = 0; i < 24; ++i) one_step();

  size_t idx = 0;
  for (const auto& p : f.base.params().params()) {
    CHECK(p.value.data() == base_before[idx]);  // bitwise
    CHECK_FALSE(p.value.has_grad());
    ++idx;
  }
  idx = 0;
  for (const auto& p : f.emb.params().params()) {
    CHECK(p.value.data() == emb_before[idx]);
    ++idx;
  }
}

TEST_CASE("fine-tune loss at initialization equals the base diffusion loss") {
  Fixture f;
  f.emb.params().lock_all();
  Rng r(23);
  std::vector<vision::TripletSample> pool{f.sample_with_edges(r), f.sample_with_edges(r)};
  std::vector<const vision::TripletSample*> ptrs{&pool[0], &pool[1]};

  Rng assemble_rng(31);
  const Batch batch = assemble_batch(ptrs, 0.5, /*with_control=*/true, assemble_rng);
  Batch base_batch = batch;
  base_batch.control = Tensor{};  // plain denoiser takes no control

  Rng draw1(41), draw2(41);  // identical (t, eps) draws for the two routes
  double grafted_loss;
  {
    Tape tape;
    grafted_loss = diffusion_loss(f.graft, f.emb, f.ns, batch, draw1).item();
  }
  double base_loss;
  {
    Tape tape;
    base_loss = diffusion_loss(f.base, f.emb, f.ns, base_batch, draw2).item();
  }
  CHECK(std::abs(grafted_loss - base_loss) < 1e-5);
}

TEST_CASE("finetune_step demands a locked base") {
  DenoiserConfig cfg = tiny_config();
  Rng rng(3);
  TextEmbedder emb({"a"}, cfg.text_dim, rng);
  Denoiser base(cfg, rng);
  GraftedDenoiser graft = GraftedDenoiser::graft(base, rng);
  base.params().params()[0].set_locked(false);  // sabotage the contract

  vision::TripletSample s;
  s.image = vision::Image::zeros(cfg.resolution, cfg.resolution, 1);
  s.edge = vision::EdgeMap::zeros(cfg.resolution, cfg.resolution);
  s.prompt = "a";
  const Batch batch = [&] {
    Rng r(1);
    return assemble_batch({&s}, 0.0, true, r);
  }();
  Rng r(2);
  const NoiseSchedule ns = default_schedule(4);
  CHECK_THROWS_AS(finetune_step(graft, emb, ns, batch, r), std::logic_error);
}
