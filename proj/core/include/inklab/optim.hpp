#pragma once

#include <cstdint>
#include <vector>

#include "inklab/params.hpp"

namespace inklab {

/// Warmup + cosine schedule with optional restarts. During warmup the rate
/// rises linearly from 0; each cycle then decays base_lr * (1+cos(pi*t/L))/2
/// from base_lr down to 0, restarting at base_lr. After the last configured
/// cycle the rate stays 0.
struct LrSchedule {
  double base_lr = 5e-6;
  int64_t warmup_steps = 100;
  int64_t cycle_length = 0;  // must be >= 1 when used
  int num_restarts = 0;

  double at(int64_t step) const;
};

struct AdamConfig {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Adam over a fixed set of parameters (gathered from one or more
/// registries). Locked parameters are skipped; a missing gradient on a
/// trainable parameter is an error. step() consumes and clears gradients.
class Adam {
 public:
  Adam(std::vector<Parameter*> targets, AdamConfig cfg = {});
  explicit Adam(ParamRegistry& reg, AdamConfig cfg = {});

  /// Apply one update. Gradients are divided by grad_divisor first (used by
  /// gradient accumulation).
  void step(double lr, int grad_divisor = 1);

  int64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }

  /// Moment vectors in parameter order, exposed for checkpointing.
  struct Slot {
    Parameter* param;
    std::vector<float> m, v;
  };
  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }
  void set_step_count(int64_t n) { step_count_ = n; }

 private:
  AdamConfig cfg_;
  std::vector<Slot> slots_;
  int64_t step_count_ = 0;
};

/// Gradient accumulation: backward passes between optimizer steps simply add
/// into the parameter gradients; every `accumulation`-th micro-step applies
/// the optimizer with gradients averaged over the window. micro_step counts
/// completed micro-batches starting at 1. Returns whether a step was applied.
bool accumulate_and_maybe_step(Adam& opt, const LrSchedule& schedule, int64_t micro_step,
                               int accumulation);

}  // namespace inklab
