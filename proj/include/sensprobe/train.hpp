#ifndef SENSPROBE_TRAIN_HPP
#define SENSPROBE_TRAIN_HPP

// Minibatch SGD on binary cross-entropy for ReLU/sigmoid networks.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sensprobe/dataset.hpp"
#include "sensprobe/error.hpp"
#include "sensprobe/mlp.hpp"
#include "sensprobe/random.hpp"

namespace sensprobe {

struct TrainConfig {
  /// Layer widths after the input, e.g. {8, 6, 4, 1}.
  std::vector<std::size_t> architecture{8, 6, 4, 1};
  std::size_t epochs = 300;
  double learning_rate = 0.05;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;

  void validate() const {
    if (architecture.empty()) throw InvalidInput("architecture must list at least the output layer");
    for (auto w : architecture)
      if (w == 0) throw InvalidInput("layer widths must be positive");
    if (architecture.back() != 1) throw InvalidInput("last layer width must be 1");
    if (batch_size == 0) throw InvalidInput("batch_size must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidInput("learning_rate must be positive");
  }
};

/// Double-precision working copy of the parameters used during training.
struct DenseParams {
  std::vector<std::size_t> widths;  // input first
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> bias;

  std::size_t layer_count() const { return weights.size(); }

  static DenseParams from_mlp(const Mlp& m) {
    DenseParams p;
    p.widths = m.widths();
    for (const auto& l : m.layers()) {
      p.weights.emplace_back(l.weights.begin(), l.weights.end());
      p.bias.emplace_back(l.bias.begin(), l.bias.end());
    }
    return p;
  }

  Mlp to_mlp() const {
    std::vector<Layer> layers;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Layer L;
      L.in = widths[l];
      L.out = widths[l + 1];
      L.weights.assign(weights[l].begin(), weights[l].end());
      L.bias.assign(bias[l].begin(), bias[l].end());
      layers.push_back(std::move(L));
    }
    return Mlp(std::move(layers));
  }
};

/// Weights uniform in [0, 1/fan_in], biases zero.
inline DenseParams init_params(std::size_t input_dim, std::span<const std::size_t> architecture, Rng& rng) {
  DenseParams p;
  p.widths.push_back(input_dim);
  p.widths.insert(p.widths.end(), architecture.begin(), architecture.end());
  for (std::size_t l = 0; l + 1 < p.widths.size(); ++l) {
    const std::size_t in = p.widths[l], out = p.widths[l + 1];
    std::vector<double> w(in * out);
    for (auto& v : w) v = rng.uniform(0.0, 1.0 / static_cast<double>(in));
    p.weights.push_back(std::move(w));
    p.bias.emplace_back(out, 0.0);
  }
  return p;
}

struct LossGrad {
  double loss = 0;
  DenseParams grad;
};

inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

/// Mean binary cross-entropy over `batch` and its gradient. The ReLU
/// derivative at exactly zero is taken as 0.
inline LossGrad loss_and_gradient(const DenseParams& p, std::span<const Sample> batch) {
  const std::size_t L = p.layer_count();
  LossGrad out;
  out.grad.widths = p.widths;
  for (std::size_t l = 0; l < L; ++l) {
    out.grad.weights.emplace_back(p.weights[l].size(), 0.0);
    out.grad.bias.emplace_back(p.bias[l].size(), 0.0);
  }
  if (batch.empty()) return out;
  const double scale = 1.0 / static_cast<double>(batch.size());

  std::vector<std::vector<double>> acts(L + 1), pres(L);
  for (const auto& s : batch) {
    acts[0] = s.x;
    for (std::size_t l = 0; l < L; ++l) {
      const std::size_t in = p.widths[l], outw = p.widths[l + 1];
      pres[l].assign(outw, 0.0);
      for (std::size_t r = 0; r < outw; ++r) {
        double acc = p.bias[l][r];
        for (std::size_t c = 0; c < in; ++c) acc += p.weights[l][r * in + c] * acts[l][c];
        pres[l][r] = acc;
      }
      acts[l + 1] = pres[l];
      if (l + 1 < L)
        for (auto& v : acts[l + 1]) v = v > 0 ? v : 0.0;
    }
    const double z = pres[L - 1][0];
    const double y = s.label;
    out.loss += (softplus(z) - y * z) * scale;

    std::vector<double> delta{(sigmoid(z) - y) * scale};
    for (std::size_t l = L; l-- > 0;) {
      const std::size_t in = p.widths[l], outw = p.widths[l + 1];
      for (std::size_t r = 0; r < outw; ++r) {
        out.grad.bias[l][r] += delta[r];
        for (std::size_t c = 0; c < in; ++c) out.grad.weights[l][r * in + c] += delta[r] * acts[l][c];
      }
      if (l == 0) break;
      std::vector<double> prev(in, 0.0);
      for (std::size_t c = 0; c < in; ++c) {
        if (!(pres[l - 1][c] > 0)) continue;
        double acc = 0;
        for (std::size_t r = 0; r < outw; ++r) acc += p.weights[l][r * in + c] * delta[r];
        prev[c] = acc;
      }
      delta = std::move(prev);
    }
  }
  return out;
}

namespace detail {

inline void sgd(DenseParams& p, std::vector<Sample> samples, std::size_t epochs, double lr, std::size_t batch_size,
                Rng& rng) {
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(samples.begin(), samples.end());
    double epoch_loss = 0;
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
      const std::size_t n = std::min(batch_size, samples.size() - start);
      LossGrad lg = loss_and_gradient(p, std::span<const Sample>(samples).subspan(start, n));
      epoch_loss += lg.loss * static_cast<double>(n);
      for (std::size_t l = 0; l < p.layer_count(); ++l) {
        for (std::size_t i = 0; i < p.weights[l].size(); ++i) p.weights[l][i] -= lr * lg.grad.weights[l][i];
        for (std::size_t i = 0; i < p.bias[l].size(); ++i) p.bias[l][i] -= lr * lg.grad.bias[l][i];
      }
    }
    if (!std::isfinite(epoch_loss))
      throw DivergenceError("training loss became non-finite at epoch " + std::to_string(epoch + 1) +
                            "; try a smaller learning rate");
  }
}

inline void require_both_labels(const Dataset& d) {
  if (d.count_label(0) == 0 || d.count_label(1) == 0)
    throw InvalidInput("training data must contain samples of both labels");
}

}  // namespace detail

/// Trains a fresh network on `d`. Deterministic for a given seed.
inline Mlp train(const TrainConfig& cfg, const Dataset& d) {
  cfg.validate();
  detail::require_both_labels(d);
  Rng rng(cfg.seed);
  DenseParams p = init_params(d.dim, cfg.architecture, rng);
  detail::sgd(p, d.samples, cfg.epochs, cfg.learning_rate, cfg.batch_size, rng);
  return p.to_mlp();
}

/// Continues training `m` on `samples`; the architecture is untouched.
inline Mlp fine_tune(const Mlp& m, std::vector<Sample> samples, const TrainConfig& cfg) {
  if (cfg.batch_size == 0) throw InvalidInput("batch_size must be positive");
  if (cfg.epochs == 0) return m;
  Rng rng(cfg.seed);
  DenseParams p = DenseParams::from_mlp(m);
  detail::sgd(p, std::move(samples), cfg.epochs, cfg.learning_rate, cfg.batch_size, rng);
  return p.to_mlp();
}

struct Metrics {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
};

/// Label 1 is the positive class. Ratios with a zero denominator are 1.
inline Metrics evaluate(const Mlp& m, const Dataset& d) {
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (const auto& s : d.samples) {
    const int pred = predicted_label(probability(m, s.x));
    correct += pred == s.label;
    tp += pred == 1 && s.label == 1;
    fp += pred == 1 && s.label == 0;
    fn += pred == 0 && s.label == 1;
  }
  auto ratio = [](std::size_t num, std::size_t den) { return den == 0 ? 1.0 : double(num) / double(den); };
  return {ratio(correct, d.size()), ratio(tp, tp + fp), ratio(tp, tp + fn)};
}

}  // namespace sensprobe

#endif  // SENSPROBE_TRAIN_HPP
