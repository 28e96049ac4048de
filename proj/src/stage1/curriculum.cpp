#include "au2av/stage1/curriculum.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "au2av/error.hpp"

namespace au2av::stage1 {

void OptimizerSettings::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ValidationError("betas must lie in [0, 1)");
  if (constant_epochs < 0 || decay_epochs < 0) throw ValidationError("epoch counts must be >= 0");
}

double lr_schedule(int epoch, const OptimizerSettings& s) {
  if (epoch < 0) throw ValidationError("epoch must be >= 0");
  if (epoch < s.constant_epochs) return s.learning_rate;
  if (s.decay_epochs == 0) return 0.0;
  const double progress = static_cast<double>(epoch - s.constant_epochs) / s.decay_epochs;
  return s.learning_rate * std::max(0.0, 1.0 - progress);
}

double moving_average_slope(const std::vector<double>& h, int patience) {
  const int n = static_cast<int>(h.size());
  const int p = std::min(patience, n - 1);
  if (p < 1) return 0.0;
  return (h[n - 1] - h[n - 1 - p]) / p;
}

double rolling_mean(const std::vector<double>& h, int patience) {
  const int n = static_cast<int>(h.size());
  const int p = std::min(patience, n);
  if (p < 1) return 0.0;
  double acc = 0.0;
  for (int i = n - p; i < n; ++i) acc += h[i];
  return acc / p;
}

bool stabilization_check(const std::vector<double>& history, double epsilon, int patience) {
  const int n = static_cast<int>(history.size());
  if (patience < 1 || n < std::max(patience, 2)) return false;
  return std::abs(moving_average_slope(history, patience)) < epsilon;
}

bool CurriculumState::stabilized(const StabilizationSettings& s) const {
  for (LossTerm t : active()) {
    auto it = loss_history.find(loss_name(t));
    if (it == loss_history.end()) return false;
    const double eps = s.relative_epsilon * std::abs(rolling_mean(it->second, s.patience));
    if (!stabilization_check(it->second, eps, s.patience)) return false;
  }
  return true;
}

bool CurriculumState::record_epoch(const std::map<LossTerm, double>& means, const StabilizationSettings& s,
                                   bool allow_advance) {
  for (LossTerm t : active()) {
    auto it = means.find(t);
    if (it == means.end()) throw ValidationError("epoch summary lacks active loss " + loss_name(t));
    loss_history[loss_name(t)].push_back(it->second);
  }
  phase_by_epoch.push_back(phase);
  ++epoch;
  if (allow_advance && phase < 3 && stabilized(s)) {
    advance_to(phase + 1);
    return true;
  }
  return false;
}

void CurriculumState::advance_to(int new_phase) {
  if (new_phase < phase || new_phase > 3) throw ValidationError("phase can only move forward within 1..3");
  if (new_phase == phase) return;
  phase = new_phase;
  loss_history.clear();
}

std::string CurriculumState::serialize() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "phase=" << phase << '\n' << "epoch=" << epoch << '\n' << "phase_by_epoch=";
  for (std::size_t i = 0; i < phase_by_epoch.size(); ++i) os << (i ? "," : "") << phase_by_epoch[i];
  os << '\n';
  for (const auto& [name, h] : loss_history) {
    os << "history." << name << '=';
    for (std::size_t i = 0; i < h.size(); ++i) os << (i ? "," : "") << h[i];
    os << '\n';
  }
  return os.str();
}

CurriculumState CurriculumState::parse(const std::string& text) {
  CurriculumState c;
  std::istringstream is(text);
  auto split = [](const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    for (std::string item; std::getline(ss, item, ',');)
      if (!item.empty()) out.push_back(item);
    return out;
  };
  for (std::string line; std::getline(is, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    try {
      if (key == "phase") c.phase = std::stoi(value);
      else if (key == "epoch") c.epoch = std::stoi(value);
      else if (key == "phase_by_epoch")
        for (const auto& v : split(value)) c.phase_by_epoch.push_back(std::stoi(v));
      else if (key.rfind("history.", 0) == 0) {
        auto& h = c.loss_history[key.substr(8)];
        for (const auto& v : split(value)) h.push_back(std::stod(v));
      }
    } catch (const std::logic_error&) {
      throw ValidationError("malformed curriculum entry '" + line + "'");
    }
  }
  if (c.phase < 1 || c.phase > 3) throw ValidationError("curriculum phase out of range");
  return c;
}

}  // namespace au2av::stage1
