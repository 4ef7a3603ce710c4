#pragma once

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include <json.hpp>

#include "objcomp/rng.hpp"

namespace objcomp {

/// Optimisation schedule for one training stage.
struct TrainSchedule {
  double learning_rate = 1e-4;
  long steps = 500;
  int batch_size = 32;
  std::uint64_t seed = 0;
  /// Linear warmup length in steps; 0 disables.
  long warmup_steps = 0;

  nlohmann::json to_json() const {
    return {{"learning_rate", learning_rate}, {"steps", steps}, {"batch_size", batch_size},
            {"seed", seed},                   {"warmup_steps", warmup_steps}};
  }
  static TrainSchedule from_json(const nlohmann::json& j) { return from_json(j, TrainSchedule{}); }
  static TrainSchedule from_json(const nlohmann::json& j, TrainSchedule d) {
    d.learning_rate = j.value("learning_rate", d.learning_rate);
    d.steps = j.value("steps", d.steps);
    d.batch_size = j.value("batch_size", d.batch_size);
    d.seed = j.value("seed", d.seed);
    d.warmup_steps = j.value("warmup_steps", d.warmup_steps);
    return d;
  }
  double rate_at(long step) const {
    if (warmup_steps <= 0 || step >= warmup_steps) return learning_rate;
    return learning_rate * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
};

/// (step, loss) per optimisation step, 1-based steps.
using LossCurve = std::vector<std::pair<long, double>>;

/// Mean loss over the last `window` entries.
inline double tail_mean(const LossCurve& curve, std::size_t window) {
  if (curve.empty()) return 0.0;
  const std::size_t n = std::min(window, curve.size());
  double s = 0;
  for (std::size_t i = curve.size() - n; i < curve.size(); ++i) s += curve[i].second;
  return s / static_cast<double>(n);
}

/// Draws minibatch indices by walking seeded permutations of [0, n).
class EpochSampler {
 public:
  EpochSampler(int n, std::uint64_t seed) : n_(n), rng_(seed) {}

  std::vector<int> next(int batch) {
    std::vector<int> out;
    out.reserve(batch);
    while (static_cast<int>(out.size()) < batch) {
      if (pos_ >= order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    for (int i = 0; i < n_; ++i) order_[i] = i;
    for (int i = n_ - 1; i > 0; --i) std::swap(order_[i], order_[rng_.uniform_int(0, i)]);
    pos_ = 0;
  }

  int n_;
  Rng rng_;
  std::vector<int> order_;
  std::size_t pos_ = 0;
};

}  // namespace objcomp
