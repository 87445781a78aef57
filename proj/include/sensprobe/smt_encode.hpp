#ifndef SENSPROBE_SMT_ENCODE_HPP
#define SENSPROBE_SMT_ENCODE_HPP

// SMT-LIB 2 encodings of networks and sensitive-sample queries.
//
// Symbol naming:
//   x_i            input feature i of the candidate sample
//   g_i            transform variable, x_i = X0_i + g_i
//   z_l_n, a_l_n   pre-activation / activation of hidden layer l (1-based),
//                  neuron n (0-based); a tag suffix such as "_tw" marks a copy
//   Z, Ztw         original and tweaked logit
//   d_e_j, d_d_j   change of output weight j, inflated / deflated group

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sensprobe/attack.hpp"
#include "sensprobe/error.hpp"
#include "sensprobe/exact.hpp"
#include "sensprobe/mlp.hpp"
#include "sensprobe/profile.hpp"

namespace sensprobe {

/// A complete script minus the trailing (check-sat)/(get-value) commands,
/// which text() appends.
struct SmtScript {
  std::string logic;
  std::string body;
  std::vector<std::string> declared;
  std::vector<std::string> query_symbols;

  std::string text() const {
    std::string out = body;
    out += "(check-sat)\n";
    if (!query_symbols.empty()) {
      out += "(get-value (";
      for (std::size_t i = 0; i < query_symbols.size(); ++i) {
        if (i) out += ' ';
        out += query_symbols[i];
      }
      out += "))\n";
    }
    return out;
  }

  /// Same script with further assertions appended before (check-sat).
  SmtScript with_assertions(const std::string& extra) const {
    SmtScript s = *this;
    s.body += extra;
    return s;
  }

  std::size_t line_count() const {
    const std::string t = text();
    return static_cast<std::size_t>(std::count(t.begin(), t.end(), '\n'));
  }
  std::size_t byte_size() const { return text().size(); }
};

/// Output of encode_network: declarations and assertions for one copy of the
/// network, plus the names callers need to hook into it.
struct NetworkFragment {
  std::string text;
  std::vector<std::string> declared;
  std::vector<std::string> inputs;
  /// Activations feeding the output layer.
  std::vector<std::string> last_hidden;
  std::string logit;
  std::size_t activation_assertions = 0;
  std::size_t linear_assertions = 0;
  bool uses_relu = false;
  bool uses_id = false;
  bool uses_zero = false;
};

namespace smt {

inline std::string node_suffix(std::size_t layer, std::size_t neuron, const std::string& tag) {
  return "_" + std::to_string(layer + 1) + "_" + std::to_string(neuron) + tag;
}

inline std::string sum(const std::vector<std::string>& terms) {
  if (terms.empty()) return "0.0";
  if (terms.size() == 1) return terms.front();
  std::string s = "(+";
  for (const auto& t : terms) s += " " + t;
  return s + ")";
}

inline std::string declare(const std::string& name) { return "(declare-const " + name + " Real)\n"; }

inline std::string definitions(bool relu, bool id, bool zero) {
  std::string s;
  if (relu) s += "(define-fun relu ((z Real) (a Real)) Bool (= a (ite (<= z 0.0) 0.0 z)))\n";
  if (id) s += "(define-fun id ((z Real) (a Real)) Bool (and (>= z 0.0) (= a z)))\n";
  if (zero) s += "(define-fun zero ((z Real) (a Real)) Bool (and (< z 0.0) (= a 0.0)))\n";
  return s;
}

}  // namespace smt

/// Encodes `m` with every hidden node constrained by relu, id or zero as the
/// plan says. Weights appear as exact literals. `tag` is appended to every
/// symbol so several copies can share one script; the logit is "Z" + tag
/// without its leading underscore (tag "_tw" gives "Ztw").
inline NetworkFragment encode_network(const Mlp& m, const FixPlan& plan, const std::string& tag = "") {
  if (!plan.covers(m)) throw DimensionError("encode_network: fix plan does not match the network's hidden nodes");
  NetworkFragment f;
  std::string& out = f.text;
  for (std::size_t i = 0; i < m.input_width(); ++i) {
    f.inputs.push_back("x_" + std::to_string(i) + tag);
    f.declared.push_back(f.inputs.back());
    out += smt::declare(f.inputs.back());
  }
  std::vector<std::string> prev = f.inputs;
  const auto& layers = m.layers();
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const Layer& L = layers[li];
    const bool output = li + 1 == layers.size();
    if (output) f.last_hidden = prev;
    std::vector<std::string> next;
    for (std::size_t r = 0; r < L.out; ++r) {
      std::vector<std::string> terms;
      terms.reserve(L.in + 1);
      for (std::size_t c = 0; c < L.in; ++c) terms.push_back("(* " + emit_exact_literal(L.weight(r, c)) + " " + prev[c] + ")");
      terms.push_back(emit_exact_literal(L.bias[r]));
      const std::string z = output ? "Z" + (tag.starts_with('_') ? tag.substr(1) : tag) : "z" + smt::node_suffix(li, r, tag);
      f.declared.push_back(z);
      out += smt::declare(z);
      out += "(assert (= " + z + " " + smt::sum(terms) + "))\n";
      ++f.linear_assertions;
      if (output) {
        f.logit = z;
        continue;
      }
      const std::string a = "a" + smt::node_suffix(li, r, tag);
      f.declared.push_back(a);
      out += smt::declare(a);
      std::string rel;
      switch (plan.status({li, r})) {
        case NodeStatus::Free: rel = "relu"; f.uses_relu = true; break;
        case NodeStatus::FixedIdentity: rel = "id"; f.uses_id = true; break;
        case NodeStatus::FixedZero: rel = "zero"; f.uses_zero = true; break;
      }
      out += "(assert (" + rel + " " + z + " " + a + "))\n";
      ++f.activation_assertions;
      next.push_back(a);
    }
    prev = std::move(next);
  }
  return f;
}

enum class DeltaMode {
  /// Weight changes are solver unknowns inside their box (QF_NRA).
  Existential,
  /// Weight changes pinned to the box corner minimising the logit shift, so
  /// the sample works for every change in the box (QF_LRA).
  Pessimistic,
};

/// Sigmoid-space shift implied by moving logit `z0` by `eps` towards `target`.
inline double modeled_sensitivity(double z0, double eps, int target = 1) {
  return target == 1 ? sigmoid(z0 + eps) - sigmoid(z0) : sigmoid(z0) - sigmoid(z0 - eps);
}

/// Smallest epsilon_Z whose modeled sensitivity at `z0` is `margin * theta`.
inline double auto_epsilon(double z0, double theta, int target = 1, double margin = 1.2) {
  const double p0 = sigmoid(z0);
  const double p1 = target == 1 ? p0 + margin * theta : p0 - margin * theta;
  if (!(p1 > 0.0 && p1 < 1.0))
    throw DomainError("no logit shift from " + std::to_string(z0) + " reaches the requested sensitivity");
  return target == 1 ? logit_inverse(p1) - z0 : z0 - logit_inverse(p1);
}

/// Everything that bounds a sensitive-sample search.
struct QuerySpec {
  std::vector<double> base;  ///< X0
  double gamma_radius = 0.2;
  /// Label the sample must keep on the original network; defaults to the
  /// label of X0.
  std::optional<int> required_label;
  int target = 1;
  /// Share of output weights assumed inflated (top by value towards target).
  double inflate_fraction = 0.3;
  std::pair<double, double> inflate_bounds{0.05, 0.25};
  std::pair<double, double> deflate_bounds{-0.05, 0.0};
  DeltaMode delta_mode = DeltaMode::Existential;
  double epsilon_z = 1.0;
  double theta = 0.01;
  /// Also assert Ztw - Z = delta . a as a redundant lemma.
  bool assert_shift_lemma = true;
  /// With unknown changes, also assert the linear consequence
  /// sum(hi_j * a_j) >= epsilon_Z (activations are never negative).
  bool assert_shift_bound = true;
};

/// Query rejected before solving; the message explains why.
class QueryRejected : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// Facts about a validated query that the encoder and re-validation share.
struct QueryPlan {
  double base_logit = 0;
  int required_label = 0;
  int sign = 1;  ///< +1 when the target is label 1, -1 otherwise
  std::vector<std::size_t> inflated;
  std::vector<bool> is_inflated;
  double modeled = 0;
};

inline QueryPlan validate_query(const Mlp& m, const QuerySpec& q) {
  if (q.base.size() != m.input_width()) throw DimensionError("query base sample width does not match the network");
  for (double v : q.base)
    if (!(v >= 0.0 && v <= 1.0)) throw QueryRejected("base sample must lie in [0,1]^n");
  if (!(q.gamma_radius >= 0.0) || !std::isfinite(q.gamma_radius)) throw QueryRejected("gamma radius must be >= 0");
  if (q.target != 0 && q.target != 1) throw QueryRejected("target label must be 0 or 1");
  if (!(q.inflate_fraction > 0.0 && q.inflate_fraction <= 1.0)) throw QueryRejected("inflate fraction must lie in (0,1]");
  if (!(q.inflate_bounds.first > 0.0 && q.inflate_bounds.first <= q.inflate_bounds.second))
    throw QueryRejected("inflation bounds must satisfy 0 < lo <= hi");
  if (!(q.deflate_bounds.first <= q.deflate_bounds.second && q.deflate_bounds.second <= 0.0))
    throw QueryRejected("deflation bounds must satisfy lo <= hi <= 0");
  if (!(q.epsilon_z > 0.0)) throw QueryRejected("epsilon_Z must be positive");
  if (!(q.theta > 0.0)) throw QueryRejected("theta must be positive");

  QueryPlan p;
  p.base_logit = forward(m, q.base).logit;
  p.required_label = q.required_label.value_or(p.base_logit >= 0.0 ? 1 : 0);
  if (p.required_label != 0 && p.required_label != 1) throw QueryRejected("required label must be 0 or 1");
  p.sign = q.target == 1 ? 1 : -1;
  p.modeled = modeled_sensitivity(p.base_logit, q.epsilon_z, q.target);
  if (p.modeled < q.theta)
    throw QueryRejected("modeled sensitivity " + std::to_string(p.modeled) + " at base logit " +
                        std::to_string(p.base_logit) + " with epsilon_Z " + std::to_string(q.epsilon_z) +
                        " is below theta " + std::to_string(q.theta) + "; raise epsilon_Z or pick another base sample");

  std::vector<float> towards_target(m.output_layer().weights);
  if (p.sign < 0)
    for (auto& w : towards_target) w = -w;
  p.inflated = top_fraction_indices(towards_target, q.inflate_fraction);
  p.is_inflated.assign(towards_target.size(), false);
  for (auto j : p.inflated) p.is_inflated[j] = true;
  return p;
}

inline std::string delta_symbol(std::size_t j, bool inflated) {
  return (inflated ? "d_e_" : "d_d_") + std::to_string(j);
}

/// Pessimistic-mode change of output weight j.
inline double pessimistic_delta(const QuerySpec& q, bool inflated) {
  return inflated ? q.inflate_bounds.first : q.deflate_bounds.first;
}

/// Full sensitive-sample script: the sample box around X0, the label
/// constraint on the original logit, the tweaked logit sharing all hidden
/// layers, the weight-change box and the logit-shift condition.
inline SmtScript encode_query(const Mlp& m, const QuerySpec& q, const FixPlan& plan) {
  const QueryPlan qp = validate_query(m, q);
  const NetworkFragment net = encode_network(m, plan);
  const bool symbolic_delta = q.delta_mode == DeltaMode::Existential;

  SmtScript s;
  s.logic = symbolic_delta ? "QF_NRA" : "QF_LRA";
  std::string& out = s.body;
  out += "(set-logic " + s.logic + ")\n";
  out += smt::definitions(net.uses_relu, net.uses_id, net.uses_zero);

  const std::string r = emit_exact_literal(q.gamma_radius);
  const std::string neg_r = q.gamma_radius == 0.0 ? "0.0" : "(- " + exact_decimal_abs(to_rational(q.gamma_radius)) + ")";
  for (std::size_t i = 0; i < m.input_width(); ++i) {
    const std::string g = "g_" + std::to_string(i);
    s.declared.push_back(g);
    s.query_symbols.push_back(g);
    out += smt::declare(g);
    out += "(assert (and (<= " + neg_r + " " + g + ") (<= " + g + " " + r + ")))\n";
  }
  out += net.text;
  s.declared.insert(s.declared.end(), net.declared.begin(), net.declared.end());
  for (std::size_t i = 0; i < m.input_width(); ++i) {
    const std::string& x = net.inputs[i];
    out += "(assert (= " + x + " (+ " + emit_exact_literal(q.base[i]) + " g_" + std::to_string(i) + ")))\n";
    out += "(assert (and (<= 0.0 " + x + ") (<= " + x + " 1.0)))\n";
  }
  out += qp.required_label == 0 ? "(assert (< Z 0.0))\n" : "(assert (> Z 0.0))\n";

  // Tweaked copy: hidden layers are shared, only the output weights move.
  const Layer& last = m.output_layer();
  std::vector<std::string> tweaked_terms, shift_terms, bound_terms;
  for (std::size_t j = 0; j < last.in; ++j) {
    const bool up = qp.is_inflated[j];
    const std::string& a = net.last_hidden[j];
    std::string delta;
    if (symbolic_delta) {
      delta = delta_symbol(j, up);
      s.declared.push_back(delta);
      out += smt::declare(delta);
      const auto& b = up ? q.inflate_bounds : q.deflate_bounds;
      if (up) {
        out += "(assert (and (< 0.0 " + delta + ") (<= " + emit_exact_literal(b.first) + " " + delta + ") (<= " + delta +
               " " + emit_exact_literal(b.second) + ")))\n";
      } else {
        out += "(assert (and (<= " + delta + " 0.0) (<= " + emit_exact_literal(b.first) + " " + delta + ") (<= " + delta +
               " " + emit_exact_literal(b.second) + ")))\n";
      }
    } else {
      delta = emit_exact_literal(pessimistic_delta(q, up));
    }
    const std::string w = emit_exact_literal(last.weight(0, j));
    std::string moved;
    if (symbolic_delta) {
      moved = qp.sign > 0 ? "(+ " + w + " " + delta + ")" : "(- " + w + " " + delta + ")";
    } else {
      // Folded into one constant so the term stays linear.
      const Rational d = to_rational(pessimistic_delta(q, up));
      moved = emit_rational(to_rational(last.weight(0, j)) + (qp.sign > 0 ? d : Rational(-d)));
    }
    tweaked_terms.push_back("(* " + moved + " " + a + ")");
    shift_terms.push_back("(* " + delta + " " + a + ")");
    const double hi = up ? q.inflate_bounds.second : q.deflate_bounds.second;
    if (hi != 0.0) bound_terms.push_back("(* " + emit_exact_literal(hi) + " " + a + ")");
  }
  tweaked_terms.push_back(emit_exact_literal(last.bias[0]));
  s.declared.push_back("Ztw");
  out += smt::declare("Ztw");
  out += "(assert (= Ztw " + smt::sum(tweaked_terms) + "))\n";
  const std::string shift = smt::sum(shift_terms);
  if (q.assert_shift_lemma) {
    const std::string diff = qp.sign > 0 ? "(- Ztw Z)" : "(- Z Ztw)";
    out += "(assert (= " + diff + " " + shift + "))\n";
  }
  if (symbolic_delta && q.assert_shift_bound)
    out += "(assert (>= " + smt::sum(bound_terms) + " " + emit_exact_literal(q.epsilon_z) + "))\n";
  out += "(assert (>= " + shift + " " + emit_exact_literal(q.epsilon_z) + "))\n";

  if (symbolic_delta)
    for (std::size_t j = 0; j < last.in; ++j) s.query_symbols.push_back(delta_symbol(j, qp.is_inflated[j]));
  s.query_symbols.push_back("Z");
  s.query_symbols.push_back("Ztw");
  return s;
}

/// Network with every node Free and the input pinned to `x`; asks for the
/// logit. Used to compare symbolic and concrete evaluation.
inline SmtScript encode_evaluation(const Mlp& m, std::span<const double> x) {
  if (x.size() != m.input_width()) throw DimensionError("encode_evaluation: input width mismatch");
  const NetworkFragment net = encode_network(m, FixPlan::all(m, NodeStatus::Free));
  SmtScript s;
  s.logic = "QF_LRA";
  s.body = "(set-logic QF_LRA)\n" + smt::definitions(net.uses_relu, false, false) + net.text;
  for (std::size_t i = 0; i < x.size(); ++i)
    s.body += "(assert (= " + net.inputs[i] + " " + emit_exact_literal(x[i]) + "))\n";
  s.declared = net.declared;
  s.query_symbols = {net.logit};
  return s;
}

/// Assertions pinning symbols to exact values.
inline std::string pin_values(const std::vector<std::pair<std::string, Rational>>& values) {
  std::string out;
  for (const auto& [name, v] : values) out += "(assert (= " + name + " " + emit_rational(v) + "))\n";
  return out;
}

}  // namespace sensprobe

#endif  // SENSPROBE_SMT_ENCODE_HPP
