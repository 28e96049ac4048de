#include "au2av/autograd/nn.hpp"

#include <cmath>

#include "au2av/error.hpp"

namespace au2av::ag {

Var& ParamStore::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw ValidationError("duplicate parameter name " + name);
  index_[name] = vars_.size();
  names_.push_back(name);
  vars_.emplace_back(std::move(init), true);
  return vars_.back();
}

const Var& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter " + name);
  return vars_[it->second];
}

Var& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter " + name);
  return vars_[it->second];
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& v : vars_) n += v.numel();
  return n;
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    Var& v = out.add(names_[i], vars_[i].value());
    v.set_requires_grad(vars_[i].requires_grad());
  }
  return out;
}

void ParamStore::zero_grad() {
  for (auto& v : vars_) v.zero_grad();
}

void ParamStore::set_trainable(bool trainable) {
  for (auto& v : vars_) v.set_requires_grad(trainable);
}

bool ParamStore::all_finite() const {
  for (const auto& v : vars_)
    if (!v.value().all_finite()) return false;
  return true;
}

void ParamStore::assign(const ParamStore& other) {
  if (other.names_ != names_) throw ValidationError("parameter sets differ");
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (other.vars_[i].shape() != vars_[i].shape())
      throw ValidationError("shape mismatch for parameter " + names_[i] + ": " + shape_string(vars_[i].shape()) +
                            " vs " + shape_string(other.vars_[i].shape()));
    vars_[i].mutable_value() = other.vars_[i].value();
  }
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (other.names_ != names_) return false;
  for (std::size_t i = 0; i < vars_.size(); ++i)
    if (!(other.vars_[i].value() == vars_[i].value())) return false;
  return true;
}

Var standardize(const Var& x, const std::vector<int>& axes, double eps) {
  Var mu = mean(x, axes);
  Var centered = x - mu;
  Var var = mean(square(centered), axes);
  return centered / sqrt(var + eps);
}

void Conv2d::init(ParamStore& store, Rng& rng) const {
  const double fan_in = static_cast<double>(in_channels) * kernel * kernel;
  store.add(name + ".weight", Tensor::randn({out_channels, in_channels, kernel, kernel}, rng, 1.0 / std::sqrt(fan_in)));
  if (bias) store.add(name + ".bias", Tensor({out_channels}, 0.0));
}

Var Conv2d::operator()(const ParamStore& store, const Var& x) const {
  const Var b = bias ? store.get(name + ".bias") : Var();
  return conv2d(x, store.get(name + ".weight"), b, {stride, padding});
}

void Linear::init(ParamStore& store, Rng& rng) const {
  store.add(name + ".weight", Tensor::randn({out_features, in_features}, rng, 1.0 / std::sqrt(in_features)));
  if (bias) store.add(name + ".bias", Tensor({out_features}, 0.0));
}

Var Linear::operator()(const ParamStore& store, const Var& x) const {
  const Var b = bias ? store.get(name + ".bias") : Var();
  return linear(x, store.get(name + ".weight"), b);
}

Adam::Adam(AdamSettings settings) : settings_(settings) {
  if (!(settings.learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");
  if (settings.beta1 < 0.0 || settings.beta1 >= 1.0 || settings.beta2 < 0.0 || settings.beta2 >= 1.0)
    throw ValidationError("Adam betas must lie in [0, 1)");
}

void Adam::step(ParamStore& params) {
  ++steps_;
  const double b1 = settings_.beta1, b2 = settings_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (const auto& name : params.names()) {
    Var& p = params.get(name);
    if (!p.requires_grad()) continue;
    const Tensor g = p.grad();
    Tensor& m = m_.try_emplace(name, Tensor(p.shape(), 0.0)).first->second;
    Tensor& v = v_.try_emplace(name, Tensor(p.shape(), 0.0)).first->second;
    Tensor& value = p.mutable_value();
    for (std::size_t i = 0; i < value.numel(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      value[i] -= settings_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + settings_.epsilon);
    }
  }
}

ParamStore Adam::export_state() const {
  ParamStore out;
  out.add("steps", Tensor::scalar(static_cast<double>(steps_)));
  for (const auto& [name, t] : m_) out.add("m." + name, t);
  for (const auto& [name, t] : v_) out.add("v." + name, t);
  return out;
}

void Adam::import_state(const ParamStore& state) {
  m_.clear();
  v_.clear();
  steps_ = static_cast<long>(state.get("steps").item());
  for (const auto& name : state.names()) {
    if (name.rfind("m.", 0) == 0) m_[name.substr(2)] = state.get(name).value();
    if (name.rfind("v.", 0) == 0) v_[name.substr(2)] = state.get(name).value();
  }
}

}  // namespace au2av::ag
