#pragma once

#include <map>
#include <string>
#include <vector>

#include "au2av/autograd/ops.hpp"

namespace au2av::ag {

/// Named, ordered set of trainable tensors: the "state" of a network.
/// Architectures are stateless descriptions that read from a store, so a
/// store can be cloned, checkpointed or shared read-only across threads.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Var& add(const std::string& name, Tensor init);
  const Var& get(const std::string& name) const;
  Var& get(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }
  std::size_t parameter_count() const;

  /// Deep copy with fresh graph leaves.
  ParamStore clone() const;
  void zero_grad();
  void set_trainable(bool trainable);
  bool all_finite() const;

  /// Copies values from `other`; names and shapes must match exactly.
  void assign(const ParamStore& other);
  bool same_values(const ParamStore& other) const;

 private:
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
  std::vector<Var> vars_;
};

/// Per-channel standardization over `axes` with an epsilon-guarded variance.
Var standardize(const Var& x, const std::vector<int>& axes, double eps);

struct Conv2d {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
  bool bias = true;

  void init(ParamStore& store, Rng& rng) const;
  Var operator()(const ParamStore& store, const Var& x) const;
  int receptive_growth() const { return kernel - 1; }
};

struct Linear {
  std::string name;
  int in_features = 0;
  int out_features = 0;
  bool bias = true;

  void init(ParamStore& store, Rng& rng) const;
  Var operator()(const ParamStore& store, const Var& x) const;
};

struct AdamSettings {
  double learning_rate = 0.002;
  double beta1 = 0.0;
  double beta2 = 0.9;
  double epsilon = 1e-8;
};

/// Adam over every trainable entry of one ParamStore.
class Adam {
 public:
  explicit Adam(AdamSettings settings = {});

  void step(ParamStore& params);
  void set_learning_rate(double lr) { settings_.learning_rate = lr; }
  const AdamSettings& settings() const noexcept { return settings_; }
  long step_count() const noexcept { return steps_; }

  /// Moment buffers, flattened as m.<name> / v.<name>, plus the step count.
  ParamStore export_state() const;
  void import_state(const ParamStore& state);

 private:
  AdamSettings settings_;
  long steps_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

}  // namespace au2av::ag
