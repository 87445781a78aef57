#ifndef SENSPROBE_MLP_HPP
#define SENSPROBE_MLP_HPP

// Fully-connected ReLU networks with a single sigmoid output.
//
// Parameters are stored as float32, the precision a deployed model ships in.
// Evaluation is generic over the scalar so the same code path serves the
// float64 default, the float32/float16 SIP modes and exact rational
// re-validation of solver models.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "sensprobe/error.hpp"
#include "sensprobe/exact.hpp"
#include "sensprobe/half.hpp"

namespace sensprobe {

/// One affine layer; `weights` is row-major out x in.
struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<float> weights;
  std::vector<float> bias;

  float weight(std::size_t row, std::size_t col) const { return weights[row * in + col]; }
  float& weight(std::size_t row, std::size_t col) { return weights[row * in + col]; }

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Hidden layers use ReLU, the last layer produces the scalar logit.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

  /// Zero-initialised network with the given widths, input first.
  static Mlp zeros(std::span<const std::size_t> widths) {
    if (widths.size() < 2) throw DimensionError("Mlp needs at least input and output widths");
    std::vector<Layer> layers;
    for (std::size_t i = 1; i < widths.size(); ++i) {
      Layer l;
      l.in = widths[i - 1];
      l.out = widths[i];
      l.weights.assign(l.in * l.out, 0.0f);
      l.bias.assign(l.out, 0.0f);
      layers.push_back(std::move(l));
    }
    return Mlp(std::move(layers));
  }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& mutable_layers() noexcept { return layers_; }
  const Layer& output_layer() const { return layers_.back(); }

  std::size_t input_width() const { return layers_.front().in; }
  std::size_t hidden_layer_count() const { return layers_.size() - 1; }

  std::size_t relu_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) n += layers_[l].out;
    return n;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.in * l.out + l.out;
    return n;
  }

  /// Widths of all layers, input first.
  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{input_width()};
    for (const auto& l : layers_) w.push_back(l.out);
    return w;
  }

  /// "30x20x10x1": layer widths without the input.
  std::string dims_string() const {
    std::string s;
    for (const auto& l : layers_) {
      if (!s.empty()) s += 'x';
      s += std::to_string(l.out);
    }
    return s;
  }

  bool same_architecture(const Mlp& o) const { return widths() == o.widths(); }

  /// Throws unless layer shapes chain, the output is scalar and every
  /// parameter is finite.
  void validate() const {
    if (layers_.empty()) throw DimensionError("Mlp has no layers");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const Layer& l = layers_[i];
      if (l.in == 0 || l.out == 0) throw DimensionError("layer " + std::to_string(i) + " has zero width");
      if (l.weights.size() != l.in * l.out || l.bias.size() != l.out)
        throw DimensionError("layer " + std::to_string(i) + " parameter count does not match its shape");
      if (i > 0 && layers_[i - 1].out != l.in)
        throw DimensionError("layer " + std::to_string(i) + " input width " + std::to_string(l.in) +
                             " != previous output width " + std::to_string(layers_[i - 1].out));
      for (float w : l.weights)
        if (!std::isfinite(w)) throw DomainError("non-finite weight in layer " + std::to_string(i));
      for (float b : l.bias)
        if (!std::isfinite(b)) throw DomainError("non-finite bias in layer " + std::to_string(i));
    }
    if (layers_.back().out != 1) throw DimensionError("output layer must have exactly one unit");
  }

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  std::vector<Layer> layers_;
};

enum class Precision { Float64, Float32, Float16RoundTrip };

/// Identifies one hidden ReLU unit. `layer` is 0-based over hidden layers.
struct NodeId {
  std::size_t layer = 0;
  std::size_t neuron = 0;
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

/// Hidden nodes in layer-major order.
inline std::vector<NodeId> hidden_nodes(const Mlp& m) {
  std::vector<NodeId> out;
  for (std::size_t l = 0; l + 1 < m.layers().size(); ++l)
    for (std::size_t n = 0; n < m.layers()[l].out; ++n) out.push_back({l, n});
  return out;
}

template <typename S>
struct BasicTrace {
  std::vector<S> input;
  /// Pre-activations of every layer; the last entry holds the logit alone.
  std::vector<std::vector<S>> pre;
  /// ReLU outputs of the hidden layers.
  std::vector<std::vector<S>> act;
  S logit{};

  const S& pre_activation(NodeId id) const { return pre[id.layer][id.neuron]; }
  /// Activations feeding the output layer.
  const std::vector<S>& last_hidden() const { return act.empty() ? input : act.back(); }
};

struct ForwardTrace : BasicTrace<double> {
  double probability = 0.5;
};

using ExactTrace = BasicTrace<Rational>;

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// ln(p / (1 - p)).
inline double logit_inverse(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("logit_inverse: p must lie in (0,1)");
  return std::log(p) - std::log1p(-p);
}

inline int predicted_label(double probability) { return probability >= 0.5 ? 1 : 0; }

namespace detail {

template <typename S, typename Cast>
BasicTrace<S> propagate(const Mlp& m, std::vector<S> x, Cast cast) {
  if (x.size() != m.input_width())
    throw DimensionError("input has " + std::to_string(x.size()) + " features, model expects " +
                         std::to_string(m.input_width()));
  BasicTrace<S> t;
  t.input = std::move(x);
  const auto& layers = m.layers();
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const Layer& L = layers[li];
    const std::vector<S>& prev = li == 0 ? t.input : t.act.back();
    std::vector<S> z(L.out);
    for (std::size_t r = 0; r < L.out; ++r) {
      S acc = cast(L.bias[r]);
      for (std::size_t c = 0; c < L.in; ++c) acc += cast(L.weight(r, c)) * prev[c];
      z[r] = acc;
    }
    if (li + 1 < layers.size()) {
      std::vector<S> a(L.out);
      for (std::size_t r = 0; r < L.out; ++r) a[r] = z[r] > S(0) ? z[r] : S(0);
      t.act.push_back(std::move(a));
    } else {
      t.logit = z[0];
    }
    t.pre.push_back(std::move(z));
  }
  return t;
}

template <typename To, typename From>
std::vector<To> convert(std::span<const From> x) {
  std::vector<To> out;
  out.reserve(x.size());
  for (const auto& v : x) out.push_back(static_cast<To>(v));
  return out;
}

template <typename S>
BasicTrace<double> widen(BasicTrace<S> t) {
  BasicTrace<double> d;
  auto w = [](const std::vector<S>& v) { return std::vector<double>(v.begin(), v.end()); };
  d.input = w(t.input);
  for (auto& v : t.pre) d.pre.push_back(w(v));
  for (auto& v : t.act) d.act.push_back(w(v));
  d.logit = static_cast<double>(t.logit);
  return d;
}

}  // namespace detail

/// Concrete forward pass. Float32 evaluates in float arithmetic;
/// Float16RoundTrip additionally stores each parameter as binary16 first.
inline ForwardTrace forward(const Mlp& m, std::span<const double> x, Precision prec = Precision::Float64) {
  ForwardTrace out;
  switch (prec) {
    case Precision::Float64:
      static_cast<BasicTrace<double>&>(out) =
          detail::propagate<double>(m, detail::convert<double>(x), [](float w) { return double(w); });
      break;
    case Precision::Float32:
      static_cast<BasicTrace<double>&>(out) = detail::widen(
          detail::propagate<float>(m, detail::convert<float>(x), [](float w) { return w; }));
      break;
    case Precision::Float16RoundTrip:
      static_cast<BasicTrace<double>&>(out) = detail::widen(detail::propagate<float>(
          m, detail::convert<float>(x), [](float w) { return round_trip_half(w); }));
      break;
  }
  out.probability = prec == Precision::Float64 ? sigmoid(out.logit)
                                               : static_cast<double>(1.0f / (1.0f + std::exp(-float(out.logit))));
  return out;
}

inline ForwardTrace forward(const Mlp& m, const std::vector<double>& x, Precision prec = Precision::Float64) {
  return forward(m, std::span<const double>(x), prec);
}

/// Forward pass in exact rational arithmetic.
inline ExactTrace forward_exact(const Mlp& m, std::span<const Rational> x) {
  return detail::propagate<Rational>(m, std::vector<Rational>(x.begin(), x.end()),
                                     [](float w) { return to_rational(w); });
}

inline double probability(const Mlp& m, std::span<const double> x, Precision prec = Precision::Float64) {
  return forward(m, x, prec).probability;
}

/// |sigma(F(x, W)) - sigma(F(x, W'))|.
inline double sensitivity(const Mlp& m, const Mlp& m2, std::span<const double> x) {
  if (!m.same_architecture(m2)) throw DimensionError("sensitivity: architectures differ");
  return std::abs(probability(m, x) - probability(m2, x));
}

/// Output shift caused by storing the parameters as float16 instead of float32.
inline double sip(const Mlp& m, std::span<const double> x) {
  return std::abs(probability(m, x, Precision::Float32) - probability(m, x, Precision::Float16RoundTrip));
}

/// Copy of `m` whose parameters went through binary16 storage.
inline Mlp quantize_half(Mlp m) {
  for (auto& l : m.mutable_layers()) {
    for (auto& w : l.weights) w = round_trip_half(w);
    for (auto& b : l.bias) b = round_trip_half(b);
  }
  return m;
}

// ---------------------------------------------------------------------------
// JSON model files: {"layers":[{"weights":[[...]],"bias":[...]}]}, numbers as
// shortest round-trip decimal strings of the float32 value.

inline std::string float_to_string(float v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw DomainError("cannot format float");
  return std::string(buf, end);
}

inline float float_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    float v = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size()) throw InvalidInput("bad number string: " + s);
    return v;
  }
  if (j.is_number()) return static_cast<float>(j.get<double>());
  throw InvalidInput("expected a number or numeric string");
}

inline nlohmann::json to_json(const Mlp& m) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : m.layers()) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < l.out; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t c = 0; c < l.in; ++c) row.push_back(float_to_string(l.weight(r, c)));
      rows.push_back(std::move(row));
    }
    nlohmann::json bias = nlohmann::json::array();
    for (float b : l.bias) bias.push_back(float_to_string(b));
    layers.push_back({{"weights", std::move(rows)}, {"bias", std::move(bias)}});
  }
  return {{"layers", std::move(layers)}};
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
  if (!j.contains("layers") || !j["layers"].is_array()) throw InvalidInput("model JSON lacks a layers array");
  std::vector<Layer> layers;
  for (const auto& jl : j["layers"]) {
    Layer l;
    const auto& rows = jl.at("weights");
    l.out = rows.size();
    l.in = l.out ? rows[0].size() : 0;
    for (const auto& row : rows) {
      if (row.size() != l.in) throw DimensionError("ragged weight matrix in model JSON");
      for (const auto& v : row) l.weights.push_back(float_from_json(v));
    }
    for (const auto& v : jl.at("bias")) l.bias.push_back(float_from_json(v));
    layers.push_back(std::move(l));
  }
  return Mlp(std::move(layers));
}

inline void save_model(const Mlp& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InvalidInput("cannot write " + path);
  f << to_json(m).dump(1) << '\n';
}

inline Mlp load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InvalidInput("cannot read " + path);
  try {
    return mlp_from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(path + ": " + e.what());
  }
}

}  // namespace sensprobe

#endif  // SENSPROBE_MLP_HPP
