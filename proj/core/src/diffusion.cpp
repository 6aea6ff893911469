#include "inklab/diffusion.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "inklab/tensor_image.hpp"

namespace inklab::diffusion {

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule ns;
  ns.T = T;
  ns.beta.resize(static_cast<size_t>(T));
  ns.alpha.resize(static_cast<size_t>(T));
  ns.alpha_bar.resize(static_cast<size_t>(T));
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t) / (T - 1);
    const double b = beta_start + (beta_end - beta_start) * frac;
    ns.beta[static_cast<size_t>(t)] = static_cast<float>(b);
    ns.alpha[static_cast<size_t>(t)] = static_cast<float>(1.0 - b);
    prod *= 1.0 - b;
    ns.alpha_bar[static_cast<size_t>(t)] = static_cast<float>(prod);
  }
  return ns;
}

NoiseSchedule default_schedule(int T) {
  const double s = 1000.0 / T;
  return make_schedule(T, std::min(1e-4 * s, 0.5), std::min(0.02 * s, 0.999 * 0.5));
}

Tensor forward_diffuse(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& ns) {
  return forward_diffuse(z0, std::vector<int>(static_cast<size_t>(z0.dim(0)), t), eps, ns);
}

Tensor forward_diffuse(const Tensor& z0, const std::vector<int>& t, const Tensor& eps,
                       const NoiseSchedule& ns) {
  if (z0.shape() != eps.shape())
    throw std::invalid_argument("forward_diffuse: z0 " + shape_str(z0.shape()) +
                                " and eps " + shape_str(eps.shape()) + " differ");
  if (z0.ndim() != 4 || static_cast<int>(t.size()) != z0.dim(0))
    throw std::invalid_argument("forward_diffuse: need one timestep per batch item");
  Tensor out = Tensor::zeros(z0.shape());
  const int64_t per = z0.numel() / z0.dim(0);
  for (int b = 0; b < z0.dim(0); ++b) {
    if (t[static_cast<size_t>(b)] < 0 || t[static_cast<size_t>(b)] >= ns.T)
      throw std::invalid_argument("forward_diffuse: timestep out of range");
    const float ab = ns.alpha_bar[static_cast<size_t>(t[static_cast<size_t>(b)])];
    const float c0 = std::sqrt(ab), c1 = std::sqrt(1.0f - ab);
    const float* z = z0.data().data() + b * per;
    const float* e = eps.data().data() + b * per;
    float* y = out.data().data() + b * per;
    for (int64_t i = 0; i < per; ++i) y[i] = c0 * z[i] + c1 * e[i];
  }
  return out;
}

std::vector<std::string> TextEmbedder::vocab_from_prompts(const std::vector<std::string>& prompts) {
  std::set<std::string> words;
  for (const auto& p : prompts) {
    std::istringstream is(p);
    std::string w;
    while (is >> w) {
      std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
      words.insert(w);
    }
  }
  return {words.begin(), words.end()};
}

TextEmbedder::TextEmbedder(std::vector<std::string> vocab, int dim, Rng& rng)
    : vocab_(std::move(vocab)), dim_(dim) {
  for (size_t i = 0; i < vocab_.size(); ++i) index_[vocab_[i]] = static_cast<int>(i);
  table_ = reg_.create("embed.table", {static_cast<int>(vocab_.size()) + 1, dim_}, 0.02f, rng);
}

std::vector<int> TextEmbedder::tokenize(const std::string& prompt) const {
  std::vector<int> ids;
  std::istringstream is(prompt);
  std::string w;
  while (is >> w) {
    std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
    auto it = index_.find(w);
    ids.push_back(it == index_.end() ? null_id() : it->second);
  }
  return ids;
}

Tensor TextEmbedder::encode_batch(const std::vector<std::string>& prompts) const {
  std::vector<std::vector<int>> ids;
  ids.reserve(prompts.size());
  for (const auto& p : prompts) {
    auto t = tokenize(p);
    if (t.empty()) t.push_back(null_id());  // the null/empty-prompt row
    ids.push_back(std::move(t));
  }
  return embedding_mean(table_, ids);
}

std::vector<int> DenoiserConfig::level_channels() const {
  std::vector<int> ch;
  ch.reserve(channel_mults.size());
  for (int m : channel_mults) ch.push_back(base_channels * m);
  return ch;
}

void DenoiserConfig::validate() const {
  if (levels() < 1) throw std::invalid_argument("DenoiserConfig: need at least one level");
  const int down_factor = 1 << (levels() - 1);
  if (resolution % down_factor != 0)
    throw std::invalid_argument("DenoiserConfig: resolution " + std::to_string(resolution) +
                                " not divisible by 2^" + std::to_string(levels() - 1));
  if (channels != 1 && channels != 3)
    throw std::invalid_argument("DenoiserConfig: channels must be 1 or 3");
  if (time_dim % 2 != 0) throw std::invalid_argument("DenoiserConfig: time_dim must be even");
}

ResBlock::ResBlock(ParamRegistry& reg, const std::string& name, int in_ch, int out_ch, int time_dim,
                   Rng& rng)
    : gn1(reg, name + ".gn1", in_ch, norm_groups(in_ch)),
      conv1(reg, name + ".conv1", in_ch, out_ch, 3, 1, 1, rng),
      temb_proj(reg, name + ".temb", time_dim, out_ch, rng),
      gn2(reg, name + ".gn2", out_ch, norm_groups(out_ch)),
      conv2(reg, name + ".conv2", out_ch, out_ch, 3, 1, 1, rng),
      channel_change(in_ch != out_ch) {
  if (channel_change) skip = Conv2d(reg, name + ".skip", in_ch, out_ch, 1, 1, 0, rng);
}

Tensor ResBlock::operator()(const Tensor& x, const Tensor& temb) const {
  Tensor h = conv1(silu(gn1(x)));
  h = add(h, temb_proj(silu(temb)));  // [B,out] broadcast over H,W
  h = conv2(silu(gn2(h)));
  return add(h, channel_change ? skip(x) : x);
}

Denoiser::Denoiser(const DenoiserConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const auto ch = cfg_.level_channels();
  const int L = cfg_.levels();

  core_.conv_in = Conv2d(reg_, "in", cfg_.channels, ch[0], 3, 1, 1, rng);
  int cur = ch[0];
  for (int i = 0; i < L; ++i) {
    core_.down.emplace_back(reg_, "down" + std::to_string(i), cur, ch[static_cast<size_t>(i)],
                            cfg_.time_dim, rng);
    cur = ch[static_cast<size_t>(i)];
  }
  core_.mid = ResBlock(reg_, "mid", cur, cur, cfg_.time_dim, rng);

  time1_ = Linear(reg_, "time1", cfg_.time_dim, cfg_.time_dim, rng);
  time2_ = Linear(reg_, "time2", cfg_.time_dim, cfg_.time_dim, rng);
  text_proj_ = Linear(reg_, "text_proj", cfg_.text_dim, cfg_.time_dim, rng);

  // up path, deepest level first
  for (int i = L - 1; i >= 0; --i) {
    const int skip_ch = ch[static_cast<size_t>(i)];
    const int in_ch = (i == L - 1 ? ch[static_cast<size_t>(i)] : ch[static_cast<size_t>(i + 1)]) + skip_ch;
    up_.emplace_back(reg_, "up" + std::to_string(i), in_ch, ch[static_cast<size_t>(i)],
                     cfg_.time_dim, rng);
  }
  out_gn_ = GroupNorm(reg_, "out.gn", ch[0], norm_groups(ch[0]));
  out_conv_ = Conv2d(reg_, "out.conv", ch[0], cfg_.channels, 3, 1, 1, rng);
}

Tensor Denoiser::time_text_embedding(const std::vector<int>& tsteps, const Tensor& text_emb) const {
  const int B = static_cast<int>(tsteps.size());
  const int half = cfg_.time_dim / 2;
  Tensor sin_emb = Tensor::zeros({B, cfg_.time_dim});
  float* e = sin_emb.data().data();
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * k / half);
      const double a = tsteps[static_cast<size_t>(b)] * freq;
      e[b * cfg_.time_dim + 2 * k] = static_cast<float>(std::sin(a));
      e[b * cfg_.time_dim + 2 * k + 1] = static_cast<float>(std::cos(a));
    }
  Tensor temb = time2_(silu(time1_(sin_emb)));
  if (text_emb.defined()) temb = add(temb, text_proj_(text_emb));
  return temb;
}

Denoiser::CoreOut Denoiser::run_core(const Core& core, const Tensor& z, const Tensor& temb,
                                     const Tensor* entry_extra) {
  CoreOut out;
  Tensor h = core.conv_in(z);
  if (entry_extra) h = add(h, *entry_extra);
  const int L = static_cast<int>(core.down.size());
  for (int i = 0; i < L; ++i) {
    h = core.down[static_cast<size_t>(i)](h, temb);
    out.skips.push_back(h);
    if (i < L - 1) h = avgpool2(h);
  }
  out.middle = core.mid(h, temb);
  return out;
}

Tensor Denoiser::forward(const Tensor& z, const std::vector<int>& tsteps, const Tensor& text_emb,
                         const Injections* inj) const {
  if (z.ndim() != 4 || z.dim(1) != cfg_.channels || z.dim(2) != cfg_.resolution ||
      z.dim(3) != cfg_.resolution)
    throw std::invalid_argument("Denoiser::forward: bad input " + shape_str(z.shape()));
  const Tensor temb = time_text_embedding(tsteps, text_emb);
  CoreOut co = run_core(core_, z, temb, nullptr);

  const int L = cfg_.levels();
  if (inj) {
    if (static_cast<int>(inj->skips.size()) != L || !inj->middle.defined())
      throw std::invalid_argument("Denoiser::forward: injection layout mismatch");
    for (int i = 0; i < L; ++i)
      co.skips[static_cast<size_t>(i)] =
          add(co.skips[static_cast<size_t>(i)], inj->skips[static_cast<size_t>(i)]);
    co.middle = add(co.middle, inj->middle);
  }

  Tensor h = co.middle;
  for (int i = L - 1; i >= 0; --i) {
    h = concat(h, co.skips[static_cast<size_t>(i)], 1);
    h = up_[static_cast<size_t>(L - 1 - i)](h, temb);
    if (i > 0) h = nearest_upsample2(h);
  }
  return out_conv_(silu(out_gn_(h)));
}

Tensor Denoiser::predict_eps(const Tensor& z, const std::vector<int>& tsteps,
                             const Tensor& text_emb, const Tensor* control) const {
  if (control)
    throw std::invalid_argument("Denoiser: control conditioning requires a grafted branch");
  return forward(z, tsteps, text_emb, nullptr);
}

Batch assemble_batch(const std::vector<const vision::TripletSample*>& samples, double dropout_p,
                     bool with_control, Rng& rng) {
  if (samples.empty()) throw std::invalid_argument("assemble_batch: empty batch");
  std::vector<const vision::Image*> imgs;
  std::vector<const vision::EdgeMap*> edges;
  Batch batch;
  for (const auto* s : samples) {
    imgs.push_back(&s->image);
    edges.push_back(&s->edge);
    batch.prompts.push_back(vision::prompt_dropout(s->prompt, dropout_p, rng));
  }
  batch.z0 = images_to_pm1(imgs);
  if (with_control) batch.control = edges_to_tensor(edges);
  return batch;
}

Tensor diffusion_loss(const EpsModel& model, const TextEmbedder& embedder, const NoiseSchedule& ns,
                      const Batch& batch, Rng& rng) {
  const int B = batch.z0.dim(0);
  std::vector<int> tsteps(static_cast<size_t>(B));
  for (auto& t : tsteps) t = static_cast<int>(rng.uniform_int(ns.T));
  Tensor eps = Tensor::zeros(batch.z0.shape());
  rng.fill_normal(eps.data());

  Tensor z_t = forward_diffuse(batch.z0, tsteps, eps, ns);
  Tensor text = embedder.encode_batch(batch.prompts);
  Tensor pred = model.predict_eps(z_t, tsteps, text, batch.control.defined() ? &batch.control : nullptr);
  return mse(pred, eps);
}

double diffusion_train_step(const EpsModel& model, const TextEmbedder& embedder,
                            const NoiseSchedule& ns, const Batch& batch, Rng& rng) {
  Tape tape;
  Tensor loss = diffusion_loss(model, embedder, ns, batch, rng);
  backward(loss);
  return loss.item();
}

std::vector<vision::Image> sample(const EpsModel& model, const TextEmbedder& embedder,
                                  const NoiseSchedule& ns, const std::vector<std::string>& prompts,
                                  const std::vector<const vision::EdgeMap*>& controls,
                                  double guidance_scale, Rng& rng) {
  if (guidance_scale < 0.0) throw std::invalid_argument("sample: guidance_scale must be >= 0");
  if (prompts.empty()) throw std::invalid_argument("sample: empty prompt batch");
  NoGradGuard no_grad;

  const auto& cfg = model.config();
  const int B = static_cast<int>(prompts.size());
  Tensor control;
  bool with_control = false;
  if (!controls.empty()) {
    if (static_cast<int>(controls.size()) != B)
      throw std::invalid_argument("sample: controls must match prompts");
    with_control = std::all_of(controls.begin(), controls.end(),
                               [](const vision::EdgeMap* e) { return e != nullptr; });
    if (!with_control &&
        std::any_of(controls.begin(), controls.end(), [](const auto* e) { return e != nullptr; }))
      throw std::invalid_argument("sample: mixed control/no-control batches are not supported");
    if (with_control) control = edges_to_tensor(controls);
  }

  Tensor z = Tensor::zeros({B, cfg.channels, cfg.resolution, cfg.resolution});
  rng.fill_normal(z.data());

  const Tensor text_cond = embedder.encode_batch(prompts);
  const Tensor text_uncond =
      embedder.encode_batch(std::vector<std::string>(static_cast<size_t>(B), std::string()));
  const Tensor* ctrl = with_control ? &control : nullptr;

  std::vector<float> guided(z.data().size());
  std::vector<float> noise(z.data().size());
  for (int t = ns.T - 1; t >= 0; --t) {
    const std::vector<int> tsteps(static_cast<size_t>(B), t);
    // guided eps; the s==1 / s==0 endpoints use a single branch exactly
    if (guidance_scale == 1.0) {
      guided = model.predict_eps(z, tsteps, text_cond, ctrl).data();
    } else if (guidance_scale == 0.0) {
      guided = model.predict_eps(z, tsteps, text_uncond, ctrl).data();
    } else {
      const Tensor eps_c = model.predict_eps(z, tsteps, text_cond, ctrl);
      const Tensor eps_u = model.predict_eps(z, tsteps, text_uncond, ctrl);
      const auto& c = eps_c.data();
      const auto& u = eps_u.data();
      const float s = static_cast<float>(guidance_scale);
      for (size_t i = 0; i < guided.size(); ++i) guided[i] = u[i] + s * (c[i] - u[i]);
    }

    const float beta = ns.beta[static_cast<size_t>(t)];
    const float alpha = ns.alpha[static_cast<size_t>(t)];
    const float ab = ns.alpha_bar[static_cast<size_t>(t)];
    const float ab_prev = t > 0 ? ns.alpha_bar[static_cast<size_t>(t - 1)] : 1.0f;
    const float inv_sqrt_alpha = 1.0f / std::sqrt(alpha);
    const float eps_coef = beta / std::sqrt(1.0f - ab);
    const float sigma = t > 0 ? std::sqrt(beta * (1.0f - ab_prev) / (1.0f - ab)) : 0.0f;
    if (t > 0) rng.fill_normal(noise);

    auto& zv = z.data();
    for (size_t i = 0; i < zv.size(); ++i) {
      zv[i] = inv_sqrt_alpha * (zv[i] - eps_coef * guided[i]);
      if (t > 0) zv[i] += sigma * noise[i];
    }
  }

  std::vector<vision::Image> out;
  out.reserve(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) out.push_back(pm1_to_image(z, b));
  return out;
}

vision::Image sample_one(const EpsModel& model, const TextEmbedder& embedder,
                         const NoiseSchedule& ns, const std::string& prompt,
                         const vision::EdgeMap* control, double guidance_scale, Rng& rng) {
  std::vector<const vision::EdgeMap*> controls;
  if (control) controls.push_back(control);
  return sample(model, embedder, ns, {prompt}, controls, guidance_scale, rng)[0];
}

}  // namespace inklab::diffusion
