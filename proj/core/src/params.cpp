#include "inklab/params.hpp"

#include <cmath>
#include <stdexcept>

namespace inklab {

Tensor ParamRegistry::insert(const std::string& name, Tensor t) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  t.set_requires_grad(true);
  index_[name] = params_.size();
  params_.push_back(Parameter{name, t, false});
  return t;
}

Tensor ParamRegistry::create(const std::string& name, std::vector<int> shape, float stddev, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  rng.fill_normal(t.data(), 0.0f, stddev);
  return insert(name, std::move(t));
}

Tensor ParamRegistry::create_zeros(const std::string& name, std::vector<int> shape) {
  return insert(name, Tensor::zeros(std::move(shape)));
}

Tensor ParamRegistry::create_full(const std::string& name, std::vector<int> shape, float v) {
  return insert(name, Tensor::full(std::move(shape), v));
}

Parameter* ParamRegistry::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParamRegistry::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

void ParamRegistry::lock_all() {
  for (auto& p : params_) p.set_locked(true);
}

void ParamRegistry::zero_all_grads() {
  for (auto& p : params_) p.value.clear_grad();
}

double ParamRegistry::abs_delta(const ParamRegistry& a, const ParamRegistry& b) {
  if (a.size() != b.size()) throw std::invalid_argument("abs_delta: registry layouts differ");
  double s = 0.0;
  for (size_t i = 0; i < a.params_.size(); ++i) {
    const auto& pa = a.params_[i].value.data();
    const auto& pb = b.params_[i].value.data();
    if (pa.size() != pb.size()) throw std::invalid_argument("abs_delta: registry layouts differ");
    for (size_t j = 0; j < pa.size(); ++j) s += std::abs(static_cast<double>(pa[j]) - pb[j]);
  }
  return s;
}

float he_stddev(int fan_in) { return std::sqrt(2.0f / static_cast<float>(fan_in)); }

FreezeGuard::FreezeGuard(ParamRegistry& reg) : FreezeGuard(std::vector<ParamRegistry*>{&reg}) {}

FreezeGuard::FreezeGuard(std::vector<ParamRegistry*> regs) {
  for (auto* reg : regs)
    for (auto& p : reg->params()) {
      saved_.emplace_back(&p, p.value.requires_grad());
      p.value.set_requires_grad(false);
    }
}

FreezeGuard::~FreezeGuard() {
  for (auto& [p, rg] : saved_) p->value.set_requires_grad(rg);
}

}  // namespace inklab
