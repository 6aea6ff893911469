#include <doctest.h>

#include <cmath>

#include "inklab/dataset.hpp"
#include "inklab/diffusion.hpp"
#include "inklab/optim.hpp"
#include "inklab/tensor_image.hpp"

using namespace inklab;
using namespace inklab::diffusion;

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

vision::TripletSample gray_sample(int res, float level, const std::string& prompt) {
  vision::TripletSample s;
  s.image = vision::Image::zeros(res, res, 1);
  std::fill(s.image.pixels.begin(), s.image.pixels.end(), level);
  s.edge = vision::EdgeMap::zeros(res, res);
  s.prompt = prompt;
  return s;
}

// Stub predicting a fixed tensor per branch (cond vs uncond), distinguished
// by comparing the incoming text embedding with the null row.
class BranchStub : public EpsModel {
 public:
  BranchStub(const DenoiserConfig& cfg, std::vector<float> null_row, float uncond_value,
             float cond_value)
      : cfg_(cfg), null_row_(std::move(null_row)), uncond_(uncond_value), cond_(cond_value) {}

  Tensor predict_eps(const Tensor& z, const std::vector<int>&, const Tensor& text_emb,
                     const Tensor*) const override {
    Tensor out = Tensor::zeros(z.shape());
    const int d = text_emb.dim(1);
    for (int b = 0; b < z.dim(0); ++b) {
      bool is_null = true;
      for (int j = 0; j < d; ++j)
        if (text_emb.data()[static_cast<size_t>(b * d + j)] != null_row_[static_cast<size_t>(j)])
          is_null = false;
      const float v = is_null ? uncond_ : cond_;
      const int64_t per = z.numel() / z.dim(0);
      for (int64_t i = 0; i < per; ++i) out.data()[static_cast<size_t>(b * per + i)] = v;
    }
    return out;
  }
  const DenoiserConfig& config() const override { return cfg_; }

 private:
  DenoiserConfig cfg_;
  std::vector<float> null_row_;
  float uncond_, cond_;
};

class ConstStub : public EpsModel {
 public:
  ConstStub(const DenoiserConfig& cfg, float v) : cfg_(cfg), v_(v) {}
  Tensor predict_eps(const Tensor& z, const std::vector<int>&, const Tensor&,
                     const Tensor*) const override {
    return Tensor::full(z.shape(), v_);
  }
  const DenoiserConfig& config() const override { return cfg_; }

 private:
  DenoiserConfig cfg_;
  float v_;
};

}  // namespace

TEST_CASE("make_schedule: single step, monotonicity, and the cumulative-product oracle") {
  const NoiseSchedule one = make_schedule(1, 0.5, 0.5);
  REQUIRE(one.T == 1);
  CHECK(one.alpha_bar[0] == doctest::Approx(0.5));

  const NoiseSchedule ns = default_schedule(50);
  REQUIRE(ns.T == 50);
  double prod = 1.0;
  for (int t = 0; t < 50; ++t) {
    if (t > 0) CHECK(ns.alpha_bar[t] < ns.alpha_bar[t - 1]);
    prod *= 1.0 - ns.beta[t];
    CHECK(ns.alpha_bar[t] == doctest::Approx(prod).epsilon(1e-5));
    CHECK(ns.beta[t] > 0.0);
    CHECK(ns.beta[t] < 1.0);
  }
  CHECK(ns.alpha_bar[49] < 0.05);

  CHECK_THROWS_AS(make_schedule(10, 0.2, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(0, 0.1, 0.2), std::invalid_argument);
}

TEST_CASE("forward_diffuse: no-noise and pure-noise limits plus shape checks") {
  NoiseSchedule ns;
  ns.T = 2;
  ns.beta = {0.0f, 0.0f};
  ns.alpha = {1.0f, 1.0f};
  ns.alpha_bar = {1.0f, 0.0f};  // crafted limits

  Rng rng(4);
  Tensor z0 = Tensor::zeros({2, 1, 4, 4});
  Tensor eps = Tensor::zeros({2, 1, 4, 4});
  rng.fill_normal(z0.data());
  rng.fill_normal(eps.data());

  CHECK(forward_diffuse(z0, 0, eps, ns).data() == z0.data());
  CHECK(forward_diffuse(z0, 1, eps, ns).data() == eps.data());
  CHECK_THROWS_AS(forward_diffuse(z0, 0, Tensor::zeros({1, 1, 4, 4}), ns), std::invalid_argument);
  CHECK_THROWS_AS(forward_diffuse(z0, 5, eps, ns), std::invalid_argument);
}

TEST_CASE("forward_diffuse matches the Monte-Carlo variance oracle") {
  NoiseSchedule ns;
  ns.T = 1;
  ns.beta = {0.6f};
  ns.alpha = {0.4f};
  ns.alpha_bar = {0.4f};

  Rng rng(11);
  const int n = 10000;
  Tensor z0 = Tensor::zeros({n, 1, 1, 1});
  Tensor eps = Tensor::zeros({n, 1, 1, 1});
  rng.fill_normal(eps.data());
  const Tensor zt = forward_diffuse(z0, 0, eps, ns);

  double mean = 0.0;
  for (float v : zt.data()) mean += v;
  mean /= n;
  double var = 0.0;
  for (float v : zt.data()) var += (v - mean) * (v - mean);
  var /= n - 1;
  CHECK(var == doctest::Approx(0.6).epsilon(0.05));
}

TEST_CASE("text embedder: vocab, null row and determinism") {
  const auto vocab = TextEmbedder::vocab_from_prompts({"Yao Wen Han style", "wash style"});
  CHECK(vocab == std::vector<std::string>{"han", "style", "wash", "wen", "yao"});

  Rng rng(3);
  TextEmbedder emb(vocab, 4, rng);
  CHECK(emb.null_id() == 5);

  const Tensor null_row = emb.encode("");
  const auto& table = emb.params().find("embed.table")->value;
  for (int j = 0; j < 4; ++j)
    CHECK(null_row.data()[j] == table.data()[static_cast<size_t>(emb.null_id() * 4 + j)]);

  // unknown words fall back to the null row
  const Tensor unk = emb.encode("zzz");
  CHECK(unk.data() == null_row.data());

  const Tensor a = emb.encode("yao wen han style");
  const Tensor b = emb.encode("YAO WEN HAN STYLE");
  CHECK(a.data() == b.data());  // lowercase tokenization
}

TEST_CASE("diffusion loss: perfect predictor gives zero, zero predictor about one") {
  DenoiserConfig cfg = tiny_config();
  Rng rng(5);
  TextEmbedder emb({"style"}, cfg.text_dim, rng);

  std::vector<vision::TripletSample> pool;
  pool.push_back(gray_sample(cfg.resolution, 0.5f, "style"));  // z0 = 0 in [-1,1]
  std::vector<const vision::TripletSample*> ptrs(64, &pool[0]);

  NoiseSchedule ns;
  ns.T = 1;
  ns.beta = {0.6f};
  ns.alpha = {0.4f};
  ns.alpha_bar = {0.36f};  // sqrt(1-abar) = 0.8

  // perfect predictor inverts z_t = 0.8*eps
  class Inverter : public EpsModel {
   public:
    explicit Inverter(const DenoiserConfig& c) : cfg_(c) {}
    Tensor predict_eps(const Tensor& z, const std::vector<int>&, const Tensor&,
                       const Tensor*) const override {
      return scale(z, 1.0f / 0.8f);
    }
    const DenoiserConfig& config() const override { return cfg_; }
    DenoiserConfig cfg_;
  } inverter(cfg);

  Rng draw1(7);
  const Batch batch = assemble_batch(ptrs, 0.0, false, draw1);
  Rng draw2(99);
  const Tensor perfect = diffusion_loss(inverter, emb, ns, batch, draw2);
  CHECK(perfect.item() < 1e-8);

  ConstStub zeros(cfg, 0.0f);
  Rng draw3(99);
  const Tensor zero_loss = diffusion_loss(zeros, emb, ns, batch, draw3);
  CHECK(zero_loss.item() == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("denoiser output shape equals input shape across configurations") {
  for (int res : {8, 16}) {
    for (int ch : {1, 3}) {
      DenoiserConfig cfg = tiny_config();
      cfg.resolution = res;
      cfg.channels = ch;
      Rng rng(2);
      Denoiser d(cfg, rng);
      TextEmbedder emb({"a"}, cfg.text_dim, rng);
      Tensor z = Tensor::zeros({2, ch, res, res});
      rng.fill_normal(z.data());
      const Tensor out = d.forward(z, {0, 1}, emb.encode_batch({"a", ""}));
      CHECK(out.shape() == z.shape());
    }
  }
  DenoiserConfig bad = tiny_config();
  bad.resolution = 9;  // not divisible by 2^(levels-1)
  Rng rng(2);
  CHECK_THROWS_AS(Denoiser(bad, rng), std::invalid_argument);
}

TEST_CASE("classifier-free guidance endpoints are exact and blends are affine") {
  DenoiserConfig cfg = tiny_config();
  Rng rng(21);
  TextEmbedder emb({"x"}, cfg.text_dim, rng);
  const std::vector<float> null_row = emb.encode("").data();

  const NoiseSchedule ns = default_schedule(6);
  const float a = 0.12f, b = -0.34f;  // uncond / cond stub outputs
  BranchStub stub(cfg, null_row, a, b);

  auto run = [&](const EpsModel& m, double s, uint64_t seed) {
    Rng r(seed);
    return sample(m, emb, ns, {"x", "x"}, {}, s, r);
  };

  // s=1: identical to a model that always returns the conditional value
  const auto guided1 = run(stub, 1.0, 55);
  const auto cond_only = run(ConstStub(cfg, b), 1.0, 55);
  REQUIRE(guided1.size() == cond_only.size());
  for (size_t i = 0; i < guided1.size(); ++i)
    CHECK(guided1[i].pixels == cond_only[i].pixels);

  // s=0: identical to the unconditional value
  const auto guided0 = run(stub, 0.0, 55);
  const auto uncond_only = run(ConstStub(cfg, a), 1.0, 55);
  for (size_t i = 0; i < guided0.size(); ++i)
    CHECK(guided0[i].pixels == uncond_only[i].pixels);

  // generic s: u + s*(c-u), computed the same way
  const float s = 3.0f;
  const auto guided3 = run(stub, s, 55);
  const auto blend_only = run(ConstStub(cfg, a + s * (b - a)), 1.0, 55);
  for (size_t i = 0; i < guided3.size(); ++i)
    CHECK(guided3[i].pixels == blend_only[i].pixels);
}

TEST_CASE("sampling is deterministic given the seed") {
  DenoiserConfig cfg = tiny_config();
  Rng rng(33);
  TextEmbedder emb({"style", "ruled"}, cfg.text_dim, rng);
  Denoiser d(cfg, rng);
  const NoiseSchedule ns = default_schedule(8);

  Rng r1(77), r2(77), r3(78);
  const auto im1 = sample_one(d, emb, ns, "ruled style", nullptr, 3.0, r1);
  const auto im2 = sample_one(d, emb, ns, "ruled style", nullptr, 3.0, r2);
  const auto im3 = sample_one(d, emb, ns, "ruled style", nullptr, 3.0, r3);
  CHECK(im1.pixels == im2.pixels);
  CHECK(im1.pixels != im3.pixels);
  for (float v : im1.pixels) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("a short training run reduces the loss on a toy corpus") {
  DenoiserConfig cfg = tiny_config();
  Rng rng(13);
  TextEmbedder emb({"ruled", "wash", "style"}, cfg.text_dim, rng);
  Denoiser d(cfg, rng);
  const NoiseSchedule ns = default_schedule(10);

  // toy corpus: flat dark vs bright images with distinct prompts
  std::vector<vision::TripletSample> pool;
  pool.push_back(gray_sample(cfg.resolution, 0.15f, "ruled style"));
  pool.push_back(gray_sample(cfg.resolution, 0.85f, "wash style"));

  std::vector<Parameter*> targets;
  for (auto& p : d.params().params()) targets.push_back(&p);
  for (auto& p : emb.params().params()) targets.push_back(&p);
  Adam opt(targets);
  LrSchedule sched{2e-3, 10, 100000, 0};

  std::vector<double> losses;
  for (int step = 0; step < 150; ++step) {
    std::vector<const vision::TripletSample*> batch_ptrs{
        &pool[static_cast<size_t>(rng.uniform_int(2))], &pool[static_cast<size_t>(rng.uniform_int(2))]};
    const Batch batch = assemble_batch(batch_ptrs, 0.5, false, rng);
    losses.push_back(diffusion_train_step(d, emb, ns, batch, rng));
    opt.step(sched.at(opt.step_count()));
  }
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 30; ++i) {
    head += losses[static_cast<size_t>(i)];
    tail += losses[losses.size() - 1 - static_cast<size_t>(i)];
  }
  CHECK(tail < head);
}
