#ifndef SENSPROBE_ATTACK_HPP
#define SENSPROBE_ATTACK_HPP

// Simulated parameter-manipulation attacks: trigger-poisoned retraining and a
// direct inflate/deflate perturbation of the output-layer weights.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sensprobe/dataset.hpp"
#include "sensprobe/error.hpp"
#include "sensprobe/mlp.hpp"
#include "sensprobe/random.hpp"
#include "sensprobe/train.hpp"

namespace sensprobe {

/// A patch overwrite: feature `index` takes `value`. `target` is the label
/// the attacker wants stamped inputs to receive.
struct Trigger {
  struct Pixel {
    std::size_t index = 0;
    double value = 1.0;
  };
  std::vector<Pixel> patch;
  int target = 1;

  void validate(std::size_t dim) const {
    if (target != 0 && target != 1) throw InvalidInput("trigger target must be 0 or 1");
    for (const auto& p : patch) {
      if (p.index >= dim)
        throw DimensionError("trigger index " + std::to_string(p.index) + " outside feature dimension " +
                             std::to_string(dim));
      if (!(p.value >= 0.0 && p.value <= 1.0)) throw InvalidInput("trigger values must lie in [0,1]");
    }
  }

  /// Square patch of `side` x `side` pixels in the bottom-right corner of a
  /// `width`-wide row-major image with `dim` features.
  static Trigger corner_patch(std::size_t dim, std::size_t width, std::size_t side, double value, int target) {
    Trigger t;
    t.target = target;
    const std::size_t height = dim / width;
    for (std::size_t r = height - side; r < height; ++r)
      for (std::size_t c = width - side; c < width; ++c) t.patch.push_back({r * width + c, value});
    t.validate(dim);
    return t;
  }
};

inline std::vector<double> stamp_trigger(std::vector<double> x, const Trigger& trig) {
  trig.validate(x.size());
  for (const auto& p : trig.patch) x[p.index] = p.value;
  return x;
}

/// Fine-tunes `m` on `d` plus stamped copies of a seeded `poison_fraction`
/// of the samples, all relabelled to the trigger's target.
inline Mlp trojan_retrain(const Mlp& m, const Dataset& d, const Trigger& trig, const TrainConfig& cfg,
                          double poison_fraction = 0.5) {
  trig.validate(d.dim);
  if (d.dim != m.input_width()) throw DimensionError("trojan_retrain: dataset and model widths differ");
  if (!(poison_fraction >= 0.0 && poison_fraction <= 1.0)) throw InvalidInput("poison_fraction must lie in [0,1]");
  if (cfg.epochs == 0) return m;

  std::vector<Sample> samples = d.samples;
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  rng.shuffle(order.begin(), order.end());
  const auto n_poison = static_cast<std::size_t>(std::llround(poison_fraction * static_cast<double>(d.size())));
  for (std::size_t i = 0; i < n_poison; ++i)
    samples.push_back({stamp_trigger(d.samples[order[i]].x, trig), trig.target});
  return fine_tune(m, std::move(samples), cfg);
}

struct PerturbSpec {
  double inflate_fraction = 0.3;
  std::pair<double, double> inflate_range{0.05, 0.25};
  std::pair<double, double> deflate_range{-0.05, 0.0};
  std::uint64_t seed = 1;

  void validate() const {
    if (!(inflate_fraction > 0.0 && inflate_fraction <= 1.0)) throw InvalidInput("inflate_fraction must lie in (0,1]");
    if (!(inflate_range.first > 0.0 && inflate_range.first <= inflate_range.second))
      throw InvalidInput("inflate range must satisfy 0 < lo <= hi");
    if (!(deflate_range.first <= deflate_range.second && deflate_range.second <= 0.0))
      throw InvalidInput("deflate range must satisfy lo <= hi <= 0");
  }
};

/// Indices of the ceil(fraction * n) largest values (signed), ties broken
/// towards the lower index. Returned in ascending index order.
inline std::vector<std::size_t> top_fraction_indices(std::span<const float> values, double fraction) {
  const auto k = std::min(values.size(), static_cast<std::size_t>(std::ceil(fraction * double(values.size()) - 1e-12)));
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// What a perturbation did to the output-layer weights.
struct DeltaReport {
  std::vector<std::size_t> inflated;
  /// Applied change per output weight (new float value minus old).
  std::vector<double> delta;
};

inline nlohmann::json to_json(const DeltaReport& r) {
  nlohmann::json deltas = nlohmann::json::object();
  for (std::size_t i = 0; i < r.delta.size(); ++i) deltas[std::to_string(i)] = r.delta[i];
  return {{"inflated", r.inflated}, {"delta", deltas}};
}

/// Inflates the top output-layer weights and deflates the rest. Only the
/// output layer's weights change.
inline std::pair<Mlp, DeltaReport> synthetic_perturb(const Mlp& m, const PerturbSpec& spec) {
  spec.validate();
  Mlp out = m;
  Layer& last = out.mutable_layers().back();
  DeltaReport rep;
  rep.inflated = top_fraction_indices(m.output_layer().weights, spec.inflate_fraction);
  Rng rng(spec.seed);
  for (std::size_t j = 0; j < last.weights.size(); ++j) {
    const bool up = std::binary_search(rep.inflated.begin(), rep.inflated.end(), j);
    const auto& range = up ? spec.inflate_range : spec.deflate_range;
    const double step = rng.uniform(range.first, range.second);
    const double before = last.weights[j];
    float after = static_cast<float>(before + step);
    // Float rounding may push the applied change just outside the range;
    // take the neighbouring float when that one fits.
    if (after - before < range.first) {
      const float up_one = std::nextafter(after, std::numeric_limits<float>::infinity());
      if (up_one - before <= range.second) after = up_one;
    } else if (after - before > range.second) {
      const float down_one = std::nextafter(after, -std::numeric_limits<float>::infinity());
      if (down_one - before >= range.first) after = down_one;
    }
    last.weights[j] = after;
    rep.delta.push_back(static_cast<double>(after) - before);
  }
  return {std::move(out), std::move(rep)};
}

/// Fraction of `d` whose stamped version `m2` labels as the trigger target.
inline double attack_success_rate(const Mlp& m2, const Dataset& d, const Trigger& trig) {
  if (d.empty()) throw InvalidInput("attack_success_rate: empty dataset");
  std::size_t hits = 0;
  for (const auto& s : d.samples) hits += predicted_label(probability(m2, stamp_trigger(s.x, trig))) == trig.target;
  return double(hits) / double(d.size());
}

}  // namespace sensprobe

#endif  // SENSPROBE_ATTACK_HPP
