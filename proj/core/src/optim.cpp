#include "inklab/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace inklab {

double LrSchedule::at(int64_t step) const {
  if (step < 0) throw std::invalid_argument("LrSchedule::at: negative step");
  if (warmup_steps > 0 && step < warmup_steps)
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (cycle_length < 1) throw std::invalid_argument("LrSchedule: cycle_length must be >= 1");
  const int64_t d = step - warmup_steps;
  // A cycle spans L+1 points: lr(base) at t=0 down to 0 at t=L, with the
  // next point starting the following cycle back at base.
  const int64_t span = cycle_length + 1;
  const int64_t cycle = d / span;
  if (cycle > num_restarts) return 0.0;
  const int64_t t = d % span;
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) /
                                         static_cast<double>(cycle_length)));
}

Adam::Adam(std::vector<Parameter*> targets, AdamConfig cfg) : cfg_(cfg) {
  slots_.reserve(targets.size());
  for (Parameter* p : targets) {
    Slot s;
    s.param = p;
    s.m.assign(p->value.data().size(), 0.0f);
    s.v.assign(p->value.data().size(), 0.0f);
    slots_.push_back(std::move(s));
  }
}

Adam::Adam(ParamRegistry& reg, AdamConfig cfg) : cfg_(cfg) {
  slots_.reserve(reg.size());
  for (auto& p : reg.params()) {
    Slot s;
    s.param = &p;
    s.m.assign(p.value.data().size(), 0.0f);
    s.v.assign(p.value.data().size(), 0.0f);
    slots_.push_back(std::move(s));
  }
}

void Adam::step(double lr, int grad_divisor) {
  if (grad_divisor < 1) throw std::invalid_argument("Adam::step: grad_divisor must be >= 1");
  ++step_count_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  const float inv_div = 1.0f / static_cast<float>(grad_divisor);

  for (auto& s : slots_) {
    if (s.param->locked) {
      s.param->value.clear_grad();  // locked params must not accumulate
      continue;
    }
    if (!s.param->value.has_grad())
      throw std::runtime_error("Adam::step: missing gradient on parameter " + s.param->name);
    auto& w = s.param->value.data();
    const auto& g = s.param->value.grad();
    for (size_t i = 0; i < w.size(); ++i) {
      const float gi = g[i] * inv_div;
      s.m[i] = static_cast<float>(b1) * s.m[i] + static_cast<float>(1.0 - b1) * gi;
      s.v[i] = static_cast<float>(b2) * s.v[i] + static_cast<float>(1.0 - b2) * gi * gi;
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      w[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
    s.param->value.clear_grad();
  }
}

bool accumulate_and_maybe_step(Adam& opt, const LrSchedule& schedule, int64_t micro_step,
                               int accumulation) {
  if (accumulation < 1) throw std::invalid_argument("accumulation must be >= 1");
  if (micro_step % accumulation != 0) return false;
  opt.step(schedule.at(opt.step_count()), accumulation);
  return true;
}

}  // namespace inklab
