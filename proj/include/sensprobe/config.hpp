#ifndef SENSPROBE_CONFIG_HPP
#define SENSPROBE_CONFIG_HPP

// Run configuration: one JSON document, every field optional, unknown keys
// rejected. `config_to_json(RunConfig{})` is the full list of defaults.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sensprobe/attack.hpp"
#include "sensprobe/error.hpp"
#include "sensprobe/smt_encode.hpp"
#include "sensprobe/solver.hpp"
#include "sensprobe/train.hpp"

namespace sensprobe {

enum class SearchMode { Greedy, Naive };

struct TriggerConfig {
  /// Corner patch of an image `width` features wide; ignored when `patch`
  /// lists explicit pixels.
  std::size_t width = 4;
  std::size_t side = 2;
  double value = 1.0;
  int target = 1;
  std::vector<Trigger::Pixel> patch;

  Trigger build(std::size_t dim) const {
    if (patch.empty()) {
      if (width == 0 || side == 0 || side > width || dim % width != 0 || side > dim / width)
        throw InvalidInput("trigger corner patch does not fit a " + std::to_string(dim) + "-feature input of width " +
                           std::to_string(width));
      return Trigger::corner_patch(dim, width, side, value, target);
    }
    Trigger t{patch, target};
    t.validate(dim);
    return t;
  }
};

struct RunConfig {
  std::uint64_t seed = 7;

  std::optional<std::string> model_path;
  std::optional<std::string> dataset_path;
  std::string out_dir = "run";

  // Synthetic data, used when no dataset path is given.
  std::size_t dim = 16;
  std::size_t per_class = 60;
  double margin = 0.2;

  TrainConfig train;
  TrainConfig retrain{{8, 6, 4, 1}, 100, 0.05, 16, 1};
  double poison_fraction = 0.5;
  TriggerConfig trigger;
  PerturbSpec perturb;

  QuerySpec query;
  /// When unset, epsilon_Z is derived from the base logit so that the
  /// modeled sensitivity is `epsilon_margin * theta`.
  std::optional<double> epsilon_z;
  double epsilon_margin = 1.2;
  /// Dataset row used as X0. When unset, non-target samples closest to the
  /// decision boundary are tried in turn, at most `base_candidates` of them.
  std::optional<std::size_t> base_index;
  std::size_t base_candidates = 3;

  SearchMode mode = SearchMode::Greedy;
  std::vector<std::optional<double>> schedule{5.0, 20.0};
  bool reuse_unsat = true;

  SolverConfig solver = SolverConfig::from_env();

  /// Seeds of the individual stages, all derived from `seed`.
  TrainConfig train_config() const {
    TrainConfig c = train;
    c.seed = seed;
    return c;
  }
  TrainConfig retrain_config() const {
    TrainConfig c = retrain;
    c.architecture = train.architecture;
    c.seed = seed + 100;
    return c;
  }
  PerturbSpec perturb_spec() const {
    PerturbSpec p = perturb;
    p.seed = seed;
    return p;
  }

  void validate() const {
    train.validate();
    perturb.validate();
    if (!(query.theta > 0.0)) throw InvalidInput("theta must be positive");
    if (epsilon_z && !(*epsilon_z > 0.0)) throw InvalidInput("epsilon_z must be positive");
    if (!(epsilon_margin >= 1.0)) throw InvalidInput("epsilon_margin must be at least 1");
    if (!(query.gamma_radius >= 0.0)) throw InvalidInput("gamma_radius must be >= 0");
    if (schedule.empty()) throw InvalidInput("schedule must list at least one timeout");
    for (const auto& t : schedule)
      if (t && !(*t > 0.0)) throw InvalidInput("schedule timeouts must be positive or null");
    if (base_candidates == 0) throw InvalidInput("base_candidates must be positive");
    if (!(poison_fraction >= 0.0 && poison_fraction <= 1.0)) throw InvalidInput("poison_fraction must lie in [0,1]");
    if (!(margin > 0.0 && margin < 0.5)) throw InvalidInput("margin must lie in (0,0.5)");
  }
};

namespace detail {

inline nlohmann::json opt(const std::optional<std::string>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }
inline nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }
inline nlohmann::json opt(const std::optional<std::size_t>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

inline nlohmann::json range(const std::pair<double, double>& r) { return nlohmann::json::array({r.first, r.second}); }

inline nlohmann::json train_json(const TrainConfig& c, bool with_architecture) {
  nlohmann::json j{{"epochs", c.epochs}, {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}};
  if (with_architecture) j["architecture"] = c.architecture;
  return j;
}

/// Walks a JSON object, rejecting keys nobody asked for.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InvalidInput((where_.empty() ? std::string("config") : where_) + " must be a JSON object");
  }

  void done() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.contains(key)) throw InvalidInput("unknown config key '" + where_ + key + "'");
  }

  const nlohmann::json* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (const auto* v = get(key)) {
      try {
        out = v->get<T>();
      } catch (const nlohmann::json::exception&) {
        throw InvalidInput("config key '" + where_ + key + "' has the wrong type");
      }
    }
  }

  template <typename T>
  void read_optional(const std::string& key, std::optional<T>& out) {
    if (const auto* v = get(key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      T value{};
      read(key, value);
      out = value;
    }
  }

  void read_range(const std::string& key, std::pair<double, double>& out) {
    if (const auto* v = get(key)) {
      if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number())
        throw InvalidInput("config key '" + where_ + key + "' must be [lo, hi]");
      out = {(*v)[0].get<double>(), (*v)[1].get<double>()};
    }
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline void read_train(const nlohmann::json& j, const std::string& where, TrainConfig& c, bool with_architecture) {
  Reader r(j, where);
  if (with_architecture) r.read("architecture", c.architecture);
  r.read("epochs", c.epochs);
  r.read("learning_rate", c.learning_rate);
  r.read("batch_size", c.batch_size);
  r.done();
}

inline std::string to_string(DeltaMode m) { return m == DeltaMode::Existential ? "existential" : "pessimistic"; }
inline std::string to_string(SearchMode m) { return m == SearchMode::Greedy ? "greedy" : "naive"; }

}  // namespace detail

inline DeltaMode parse_delta_mode(const std::string& s) {
  if (s == "existential") return DeltaMode::Existential;
  if (s == "pessimistic") return DeltaMode::Pessimistic;
  throw InvalidInput("delta mode must be 'existential' or 'pessimistic', not '" + s + "'");
}

inline SearchMode parse_search_mode(const std::string& s) {
  if (s == "greedy") return SearchMode::Greedy;
  if (s == "naive") return SearchMode::Naive;
  throw InvalidInput("search mode must be 'greedy' or 'naive', not '" + s + "'");
}

inline nlohmann::json schedule_to_json(const std::vector<std::optional<double>>& s) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& t : s) j.push_back(detail::opt(t));
  return j;
}

inline std::vector<std::optional<double>> schedule_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InvalidInput("schedule must be an array of seconds (null for no limit)");
  std::vector<std::optional<double>> s;
  for (const auto& v : j) {
    if (v.is_null()) {
      s.emplace_back();
    } else if (v.is_number()) {
      s.emplace_back(v.get<double>());
    } else {
      throw InvalidInput("schedule entries must be numbers or null");
    }
  }
  return s;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  using detail::opt;
  using detail::range;
  nlohmann::json patch = nlohmann::json::array();
  for (const auto& p : c.trigger.patch) patch.push_back({{"index", p.index}, {"value", p.value}});
  return {
      {"seed", c.seed},
      {"paths", {{"model", opt(c.model_path)}, {"dataset", opt(c.dataset_path)}, {"out_dir", c.out_dir}}},
      {"data", {{"dim", c.dim}, {"per_class", c.per_class}, {"margin", c.margin}}},
      {"train", detail::train_json(c.train, true)},
      {"trojan",
       {{"retrain", detail::train_json(c.retrain, false)},
        {"poison_fraction", c.poison_fraction},
        {"trigger",
         {{"width", c.trigger.width},
          {"side", c.trigger.side},
          {"value", c.trigger.value},
          {"target", c.trigger.target},
          {"patch", patch}}}}},
      {"perturb",
       {{"inflate_fraction", c.perturb.inflate_fraction},
        {"inflate_range", range(c.perturb.inflate_range)},
        {"deflate_range", range(c.perturb.deflate_range)}}},
      {"query",
       {{"gamma_radius", c.query.gamma_radius},
        {"target", c.query.target},
        {"required_label", c.query.required_label ? nlohmann::json(*c.query.required_label) : nlohmann::json()},
        {"inflate_fraction", c.query.inflate_fraction},
        {"inflate_bounds", range(c.query.inflate_bounds)},
        {"deflate_bounds", range(c.query.deflate_bounds)},
        {"delta_mode", detail::to_string(c.query.delta_mode)},
        {"epsilon_z", opt(c.epsilon_z)},
        {"epsilon_margin", c.epsilon_margin},
        {"theta", c.query.theta},
        {"base_index", opt(c.base_index)},
        {"base_candidates", c.base_candidates}}},
      {"search", {{"mode", detail::to_string(c.mode)}, {"schedule", schedule_to_json(c.schedule)}, {"reuse_unsat", c.reuse_unsat}}},
      {"solver", {{"command", c.solver.command}, {"args", c.solver.args}}},
  };
}

/// Applies `j` on top of `base`.
inline RunConfig config_from_json(const nlohmann::json& j, RunConfig c = {}) {
  using detail::Reader;
  Reader root(j, "");
  root.read("seed", c.seed);
  if (const auto* p = root.get("paths")) {
    Reader r(*p, "paths.");
    r.read_optional("model", c.model_path);
    r.read_optional("dataset", c.dataset_path);
    r.read("out_dir", c.out_dir);
    r.done();
  }
  if (const auto* p = root.get("data")) {
    Reader r(*p, "data.");
    r.read("dim", c.dim);
    r.read("per_class", c.per_class);
    r.read("margin", c.margin);
    r.done();
  }
  if (const auto* p = root.get("train")) detail::read_train(*p, "train.", c.train, true);
  if (const auto* p = root.get("trojan")) {
    Reader r(*p, "trojan.");
    if (const auto* rt = r.get("retrain")) detail::read_train(*rt, "trojan.retrain.", c.retrain, false);
    r.read("poison_fraction", c.poison_fraction);
    if (const auto* t = r.get("trigger")) {
      Reader tr(*t, "trojan.trigger.");
      tr.read("width", c.trigger.width);
      tr.read("side", c.trigger.side);
      tr.read("value", c.trigger.value);
      tr.read("target", c.trigger.target);
      if (const auto* patch = tr.get("patch")) {
        if (!patch->is_array()) throw InvalidInput("trojan.trigger.patch must be an array");
        c.trigger.patch.clear();
        for (const auto& px : *patch) {
          Reader pr(px, "trojan.trigger.patch[].");
          Trigger::Pixel pixel;
          pr.read("index", pixel.index);
          pr.read("value", pixel.value);
          pr.done();
          c.trigger.patch.push_back(pixel);
        }
      }
      tr.done();
    }
    r.done();
  }
  if (const auto* p = root.get("perturb")) {
    Reader r(*p, "perturb.");
    r.read("inflate_fraction", c.perturb.inflate_fraction);
    r.read_range("inflate_range", c.perturb.inflate_range);
    r.read_range("deflate_range", c.perturb.deflate_range);
    r.done();
  }
  if (const auto* p = root.get("query")) {
    Reader r(*p, "query.");
    r.read("gamma_radius", c.query.gamma_radius);
    r.read("target", c.query.target);
    r.read_optional("required_label", c.query.required_label);
    r.read("inflate_fraction", c.query.inflate_fraction);
    r.read_range("inflate_bounds", c.query.inflate_bounds);
    r.read_range("deflate_bounds", c.query.deflate_bounds);
    std::string mode = detail::to_string(c.query.delta_mode);
    r.read("delta_mode", mode);
    c.query.delta_mode = parse_delta_mode(mode);
    r.read_optional("epsilon_z", c.epsilon_z);
    r.read("epsilon_margin", c.epsilon_margin);
    r.read("theta", c.query.theta);
    r.read_optional("base_index", c.base_index);
    r.read("base_candidates", c.base_candidates);
    r.done();
  }
  if (const auto* p = root.get("search")) {
    Reader r(*p, "search.");
    std::string mode = detail::to_string(c.mode);
    r.read("mode", mode);
    c.mode = parse_search_mode(mode);
    if (const auto* s = r.get("schedule")) c.schedule = schedule_from_json(*s);
    r.read("reuse_unsat", c.reuse_unsat);
    r.done();
  }
  if (const auto* p = root.get("solver")) {
    Reader r(*p, "solver.");
    r.read("command", c.solver.command);
    r.read("args", c.solver.args);
    r.done();
  }
  root.done();
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InvalidInput("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace sensprobe

#endif  // SENSPROBE_CONFIG_HPP
