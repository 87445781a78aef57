#ifndef SENSPROBE_PROFILE_HPP
#define SENSPROBE_PROFILE_HPP

// Decision profiling of hidden ReLU nodes over a dataset.

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "sensprobe/dataset.hpp"
#include "sensprobe/error.hpp"
#include "sensprobe/mlp.hpp"

namespace sensprobe {

enum class Direction { Identity, Zero };

struct NodeProfile {
  NodeId node;
  std::size_t n_identity = 0;  ///< inputs with pre-activation >= 0
  std::size_t n_zero = 0;      ///< inputs with pre-activation < 0
  Direction direction = Direction::Identity;
  double d_bias = 1.0;
};

/// One entry per hidden node, layer-major.
struct DBiasProfile {
  std::vector<NodeProfile> nodes;
  std::size_t samples = 0;

  const NodeProfile& at(NodeId id) const {
    for (const auto& n : nodes)
      if (n.node == id) return n;
    throw InvalidInput("node not in profile");
  }
};

namespace detail {

inline void finish(NodeProfile& p, std::size_t total) {
  // Ties go to Identity.
  p.direction = p.n_identity >= p.n_zero ? Direction::Identity : Direction::Zero;
  p.d_bias = double(std::max(p.n_identity, p.n_zero)) / double(total);
}

}  // namespace detail

inline DBiasProfile compute_dbias(const Mlp& m, const Dataset& d) {
  if (d.empty()) throw InvalidInput("compute_dbias: empty dataset");
  DBiasProfile prof;
  prof.samples = d.size();
  for (NodeId id : hidden_nodes(m)) prof.nodes.push_back({id});
  for (const auto& s : d.samples) {
    const ForwardTrace t = forward(m, s.x);
    for (auto& n : prof.nodes) {
      if (t.pre_activation(n.node) >= 0.0) {
        ++n.n_identity;
      } else {
        ++n.n_zero;
      }
    }
  }
  for (auto& n : prof.nodes) detail::finish(n, prof.samples);
  return prof;
}

/// Adds the counts of two profiles of the same network.
inline DBiasProfile merge(const DBiasProfile& a, const DBiasProfile& b) {
  if (a.nodes.size() != b.nodes.size()) throw DimensionError("merge: profiles of different networks");
  DBiasProfile out = a;
  out.samples += b.samples;
  for (std::size_t i = 0; i < out.nodes.size(); ++i) {
    if (!(out.nodes[i].node == b.nodes[i].node)) throw DimensionError("merge: node order differs");
    out.nodes[i].n_identity += b.nodes[i].n_identity;
    out.nodes[i].n_zero += b.nodes[i].n_zero;
    detail::finish(out.nodes[i], out.samples);
  }
  return out;
}

/// Nodes by increasing d-bias; equal biases keep (layer, neuron) order. This
/// is the order in which the greedy search releases fixed nodes.
inline std::vector<NodeId> fix_order(const DBiasProfile& p) {
  std::vector<NodeProfile> sorted = p.nodes;
  std::stable_sort(sorted.begin(), sorted.end(), [](const NodeProfile& a, const NodeProfile& b) {
    // Compare the exact fractions rather than the rounded doubles.
    const std::size_t ma = std::max(a.n_identity, a.n_zero), mb = std::max(b.n_identity, b.n_zero);
    const std::size_t ta = a.n_identity + a.n_zero, tb = b.n_identity + b.n_zero;
    const auto lhs = static_cast<unsigned long long>(ma) * tb, rhs = static_cast<unsigned long long>(mb) * ta;
    if (lhs != rhs) return lhs < rhs;
    return a.node < b.node;
  });
  std::vector<NodeId> out;
  for (const auto& n : sorted) out.push_back(n.node);
  return out;
}

enum class NodeStatus { FixedIdentity, FixedZero, Free };

/// Status of every hidden node, i.e. one ReLU combination.
class FixPlan {
 public:
  FixPlan() = default;

  static FixPlan all(const Mlp& m, NodeStatus s) {
    FixPlan p;
    for (NodeId id : hidden_nodes(m)) p.status_[id] = s;
    return p;
  }

  static FixPlan from_profile(const DBiasProfile& prof) {
    FixPlan p;
    for (const auto& n : prof.nodes)
      p.status_[n.node] = n.direction == Direction::Identity ? NodeStatus::FixedIdentity : NodeStatus::FixedZero;
    return p;
  }

  NodeStatus status(NodeId id) const {
    auto it = status_.find(id);
    if (it == status_.end()) throw DimensionError("fix plan has no entry for node");
    return it->second;
  }
  void set(NodeId id, NodeStatus s) { status_[id] = s; }
  void unfix(NodeId id) { set(id, NodeStatus::Free); }

  std::size_t size() const { return status_.size(); }
  std::size_t count(NodeStatus s) const {
    return static_cast<std::size_t>(
        std::count_if(status_.begin(), status_.end(), [s](const auto& kv) { return kv.second == s; }));
  }

  /// True when the plan lists exactly the hidden nodes of `m`.
  bool covers(const Mlp& m) const {
    const auto nodes = hidden_nodes(m);
    if (nodes.size() != status_.size()) return false;
    for (NodeId id : nodes)
      if (!status_.contains(id)) return false;
    return true;
  }

  /// One character per node in layer-major order: I, Z or F.
  std::string signature() const {
    std::string s;
    for (const auto& [id, st] : status_) s += st == NodeStatus::FixedIdentity ? 'I' : st == NodeStatus::FixedZero ? 'Z' : 'F';
    return s;
  }

  friend bool operator==(const FixPlan&, const FixPlan&) = default;

 private:
  std::map<NodeId, NodeStatus> status_;
};

inline FixPlan initial_fixplan(const DBiasProfile& p) { return FixPlan::from_profile(p); }

inline nlohmann::json to_json(const DBiasProfile& p) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& n : p.nodes) {
    rows.push_back({{"node", "n_" + std::to_string(n.node.layer + 1) + "_" + std::to_string(n.node.neuron)},
                    {"layer", n.node.layer + 1},
                    {"neuron", n.node.neuron},
                    {"identity", n.n_identity},
                    {"zero", n.n_zero},
                    {"direction", n.direction == Direction::Identity ? "identity" : "zero"},
                    {"d_bias", n.d_bias}});
  }
  return {{"samples", p.samples}, {"nodes", rows}};
}

}  // namespace sensprobe

#endif  // SENSPROBE_PROFILE_HPP
