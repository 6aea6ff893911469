#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "inklab/rng.hpp"
#include "inklab/tensor.hpp"

namespace inklab {

/// Named trainable (or locked) tensor. Locked parameters accumulate no
/// gradient and receive no optimizer updates.
struct Parameter {
  std::string name;
  Tensor value;
  bool locked = false;

  void set_locked(bool v) {
    locked = v;
    value.set_requires_grad(!v);
  }
};

/// Insertion-ordered parameter registry. Ordering is part of the contract:
/// checkpoints, optimizer state and deterministic init all follow it.
class ParamRegistry {
 public:
  /// New parameter filled with N(0, stddev) draws.
  Tensor create(const std::string& name, std::vector<int> shape, float stddev, Rng& rng);
  Tensor create_zeros(const std::string& name, std::vector<int> shape);
  Tensor create_full(const std::string& name, std::vector<int> shape, float v);

  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  size_t size() const { return params_.size(); }

  void lock_all();
  void zero_all_grads();

  /// Sum of |a - b| over all parameters of two registries with identical
  /// layout; used to verify locked-parameter conservation.
  static double abs_delta(const ParamRegistry& a, const ParamRegistry& b);

 private:
  Tensor insert(const std::string& name, Tensor t);

  std::vector<Parameter> params_;
  std::unordered_map<std::string, size_t> index_;
};

/// He-style init scale for a conv / linear layer with the given fan-in.
float he_stddev(int fan_in);

/// RAII freeze: flips requires_grad off for every parameter in the registry
/// (without touching the locked flag) and restores the previous state.
class FreezeGuard {
 public:
  explicit FreezeGuard(ParamRegistry& reg);
  explicit FreezeGuard(std::vector<ParamRegistry*> regs);
  ~FreezeGuard();
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<std::pair<Parameter*, bool>> saved_;
};

}  // namespace inklab
