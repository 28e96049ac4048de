#pragma once

// Central finite-difference oracle for the reverse-mode engine. Test-only.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <random>
#include <vector>

#include "au2av/autograd/nn.hpp"

namespace au2av::testing {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

/// Compares analytic gradients of `f` (a scalar function of leaf variables)
/// with central differences. At most `max_entries` coordinates per input are
/// probed, chosen deterministically from `seed`.
inline GradCheckResult grad_check(const std::function<ag::Var(const std::vector<ag::Var>&)>& f,
                                  std::vector<ag::Tensor> inputs, double h = 1e-6, std::size_t max_entries = 40,
                                  unsigned seed = 7) {
  std::vector<ag::Var> leaves;
  for (auto& t : inputs) leaves.emplace_back(t, true);
  ag::Var out = f(leaves);
  ag::backward(out);

  std::mt19937 rng(seed);
  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const ag::Tensor analytic = leaves[k].grad();
    std::vector<std::size_t> idx(inputs[k].numel());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    if (idx.size() > max_entries) idx.resize(max_entries);

    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i : idx) {
      auto probe = [&](double delta) {
        std::vector<ag::Var> shifted;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          ag::Tensor t = inputs[j];
          if (j == k) t[i] += delta;
          shifted.emplace_back(std::move(t), false);
        }
        return f(shifted).item();
      };
      const double numeric = (probe(h) - probe(-h)) / (2.0 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
      ++result.checked;
    }
    const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-10});
    const double rel = (a2 + n2 == 0.0) ? 0.0 : std::sqrt(diff2) / scale;
    result.max_relative_error = std::max(result.max_relative_error, rel);
  }
  return result;
}

/// Same oracle over the parameters of a store: `readout` must rebuild the
/// graph from the store's current values on every call.
inline GradCheckResult param_grad_check(ag::ParamStore& store, const std::function<ag::Var()>& readout,
                                        double h = 1e-6, std::size_t max_entries = 12, unsigned seed = 7) {
  store.zero_grad();
  ag::backward(readout());
  std::map<std::string, ag::Tensor> analytic;
  for (const auto& name : store.names()) analytic.emplace(name, store.get(name).grad());

  std::mt19937 rng(seed);
  GradCheckResult result;
  for (const auto& name : store.names()) {
    ag::Tensor& value = store.get(name).mutable_value();
    std::vector<std::size_t> idx(value.numel());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    if (idx.size() > max_entries) idx.resize(max_entries);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i : idx) {
      const double saved = value[i];
      value[i] = saved + h;
      const double up = readout().item();
      value[i] = saved - h;
      const double down = readout().item();
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.at(name)[i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      ++result.checked;
    }
    const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-10});
    const double rel = (a2 + n2 < 1e-20) ? 0.0 : std::sqrt(diff2) / scale;
    result.max_relative_error = std::max(result.max_relative_error, rel);
  }
  return result;
}

inline ag::Tensor random_tensor(const ag::Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return ag::Tensor::uniform(shape, rng, lo, hi);
}

}  // namespace au2av::testing
