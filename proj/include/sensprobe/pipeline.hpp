#ifndef SENSPROBE_PIPELINE_HPP
#define SENSPROBE_PIPELINE_HPP

// Stage helpers shared by the command-line tool: data and model loading,
// base-sample choice, the search with its run directory, and the full
// train / attack / search / verify run.
//
// Run directory layout:
//   config.json                   effective configuration
//   data.csv, model.json          dataset and original model
//   model_perturbed.json (+ .delta.json), model_trojan.json (+ .delta.json)
//   profile.json                  decision profile of the original model
//   scripts/iter_{i}.smt2         one script per search iteration
//   status.log                    one line per solver call
//   outcome.json                  search result, verdicts and timings
//   report.json, report.md        summary tables

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sensprobe/attack.hpp"
#include "sensprobe/config.hpp"
#include "sensprobe/dataset.hpp"
#include "sensprobe/mlp.hpp"
#include "sensprobe/profile.hpp"
#include "sensprobe/report.hpp"
#include "sensprobe/search.hpp"
#include "sensprobe/train.hpp"

namespace sensprobe {

inline Dataset obtain_dataset(const RunConfig& c) {
  if (c.dataset_path) return load_csv(*c.dataset_path);
  return gen_synthetic(c.dim, c.per_class, c.margin, c.seed);
}

inline Mlp obtain_model(const RunConfig& c, const Dataset& d) {
  if (c.model_path) {
    Mlp m = load_model(*c.model_path);
    m.validate();
    if (m.input_width() != d.dim) throw DimensionError("model input width does not match the dataset");
    return m;
  }
  return train(c.train_config(), d);
}

struct BaseCandidate {
  std::size_t index = 0;
  double logit = 0;
};

/// Samples the model labels opposite to `target`, closest to the decision
/// boundary first (ties by row).
inline std::vector<BaseCandidate> base_candidates(const Mlp& m, const Dataset& d, int target) {
  std::vector<BaseCandidate> out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double z = forward(m, d.samples[i].x).logit;
    if (predicted_label(sigmoid(z)) != target) out.push_back({i, z});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const BaseCandidate& a, const BaseCandidate& b) { return std::abs(a.logit) < std::abs(b.logit); });
  return out;
}

/// The configured query around dataset row `index`.
inline QuerySpec make_query(const RunConfig& c, const Mlp& m, const Dataset& d, std::size_t index) {
  if (index >= d.size()) throw InvalidInput("base index " + std::to_string(index) + " outside the dataset");
  QuerySpec q = c.query;
  q.base = d.samples[index].x;
  const double z0 = forward(m, q.base).logit;
  q.epsilon_z = c.epsilon_z ? *c.epsilon_z : auto_epsilon(z0, q.theta, q.target, c.epsilon_margin);
  return q;
}

struct SearchAttempt {
  std::size_t base_index = 0;
  QuerySpec query;
  SearchOutcome outcome;
};

/// Runs the configured search, trying base samples in turn until one
/// yields a sample. Returns every attempt; the last one is the result.
inline std::vector<SearchAttempt> find_sample(const RunConfig& c, const Mlp& m, const Dataset& d,
                                              const std::optional<std::filesystem::path>& run_dir) {
  std::vector<std::size_t> bases;
  if (c.base_index) {
    bases.push_back(*c.base_index);
  } else {
    for (const auto& b : base_candidates(m, d, c.query.target)) {
      if (bases.size() == c.base_candidates) break;
      bases.push_back(b.index);
    }
    if (bases.empty()) throw InvalidInput("no sample is labelled opposite to the target; nothing to search from");
  }

  if (run_dir) {
    std::filesystem::create_directories(*run_dir / "scripts");
    std::filesystem::remove(*run_dir / "status.log");
    for (const auto& e : std::filesystem::directory_iterator(*run_dir / "scripts")) std::filesystem::remove(e.path());
  }

  SearchOptions opts;
  opts.solver = c.solver;
  opts.run_dir = run_dir;
  opts.reuse_unsat = c.reuse_unsat;

  std::vector<SearchAttempt> attempts;
  for (std::size_t b : bases) {
    SearchAttempt a{b, make_query(c, m, d, b), {}};
    if (run_dir) {
      std::ofstream log(*run_dir / "status.log", std::ios::app);
      log << "# base=" << b << " epsilon_z=" << a.query.epsilon_z << '\n';
    }
    if (c.mode == SearchMode::Greedy) {
      a.outcome = greedy_search(m, d, a.query, c.schedule, opts);
    } else {
      a.outcome = naive_search(m, a.query, c.schedule.back(), opts);
    }
    const bool found = a.outcome.kind == OutcomeKind::Found;
    attempts.push_back(std::move(a));
    if (found) break;
  }
  return attempts;
}

inline RunOutcome make_outcome(const RunConfig& c, const Mlp& m, const SearchAttempt& a) {
  RunOutcome o;
  o.network = m.dims_string();
  o.parameters = m.parameter_count();
  o.relu_nodes = m.relu_count();
  o.mode = c.mode == SearchMode::Greedy ? "greedy" : "naive";
  o.base_index = a.base_index;
  o.query = a.query;
  o.search = a.outcome;
  if (a.outcome.sample) o.sip = sip(m, a.outcome.sample->x);
  return o;
}

/// Output-layer weight changes between two models of the same shape.
inline DeltaReport output_delta(const Mlp& before, const Mlp& after) {
  if (!before.same_architecture(after)) throw DimensionError("output_delta: architectures differ");
  DeltaReport r;
  const auto& w0 = before.output_layer().weights;
  const auto& w1 = after.output_layer().weights;
  for (std::size_t j = 0; j < w0.size(); ++j) {
    r.delta.push_back(static_cast<double>(w1[j]) - static_cast<double>(w0[j]));
    if (r.delta.back() > 0) r.inflated.push_back(j);
  }
  return r;
}

/// Last component of a run directory path, ignoring a trailing slash.
inline std::string run_name(const std::filesystem::path& dir) {
  const auto p = dir.lexically_normal();
  return p.has_filename() ? p.filename().string() : p.parent_path().filename().string();
}

inline int exit_code(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::Found: return 0;
    case OutcomeKind::Unsat: return 2;
    case OutcomeKind::Inconclusive: return 3;
  }
  return 1;
}

struct EndToEndResult {
  Metrics clean;
  Metrics trojan_clean;
  double trojan_asr = 0;
  double clean_asr = 0;
  RunOutcome outcome;
  std::vector<SearchAttempt> attempts;
  Mlp model, perturbed, trojan;
};

/// Everything from data to verdicts. Writes the run directory when given.
inline EndToEndResult run_end2end(const RunConfig& c, const std::optional<std::filesystem::path>& dir) {
  c.validate();
  if (dir) std::filesystem::create_directories(*dir);
  auto save_json = [&](const std::string& name, const nlohmann::json& j) {
    if (dir) write_text_file(*dir / name, j.dump(2) + "\n");
  };
  save_json("config.json", config_to_json(c));

  EndToEndResult r;
  const Dataset d = obtain_dataset(c);
  r.model = obtain_model(c, d);
  r.clean = evaluate(r.model, d);

  const Trigger trig = c.trigger.build(d.dim);
  auto [perturbed, perturb_delta] = synthetic_perturb(r.model, c.perturb_spec());
  r.perturbed = std::move(perturbed);
  r.trojan = trojan_retrain(r.model, d, trig, c.retrain_config(), c.poison_fraction);
  r.trojan_clean = evaluate(r.trojan, d);
  const Dataset victims = d.filter_label(1 - trig.target);
  if (!victims.empty()) {
    r.trojan_asr = attack_success_rate(r.trojan, victims, trig);
    r.clean_asr = attack_success_rate(r.model, victims, trig);
  }

  if (dir) {
    save_csv(d, (*dir / "data.csv").string());
    save_model(r.model, (*dir / "model.json").string());
    save_model(r.perturbed, (*dir / "model_perturbed.json").string());
    save_json("model_perturbed.delta.json", to_json(perturb_delta));
    save_model(r.trojan, (*dir / "model_trojan.json").string());
    save_json("model_trojan.delta.json", to_json(output_delta(r.model, r.trojan)));
    save_json("profile.json", to_json(compute_dbias(r.model, d)));
  }

  r.attempts = find_sample(c, r.model, d, dir);
  r.outcome = make_outcome(c, r.model, r.attempts.back());
  if (const auto& s = r.outcome.search.sample) {
    const double theta = c.query.theta;
    auto add = [&](const std::string& name, const std::string& file, const Mlp& suspect) {
      const Verdict v = verify_sample(r.model, suspect, s->x, theta);
      r.outcome.verdicts.push_back({name, file, v.beta, v.flagged});
    };
    add("perturb", "model_perturbed.json", r.perturbed);
    add("trojan", "model_trojan.json", r.trojan);
  }

  nlohmann::json out = to_json(r.outcome);
  out["training"] = {{"accuracy", r.clean.accuracy}, {"precision", r.clean.precision}, {"recall", r.clean.recall}};
  out["attacks"] = {{"trojan",
                     {{"clean_accuracy", r.trojan_clean.accuracy},
                      {"attack_success_rate", r.trojan_asr},
                      {"attack_success_rate_before", r.clean_asr}}},
                    {"perturb", to_json(perturb_delta)}};
  if (r.attempts.size() > 1) {
    nlohmann::json earlier = nlohmann::json::array();
    for (std::size_t i = 0; i + 1 < r.attempts.size(); ++i)
      earlier.push_back({{"base_index", r.attempts[i].base_index},
                         {"status", to_string(r.attempts[i].outcome.kind)},
                         {"iterations", log_to_json(r.attempts[i].outcome.log)}});
    out["earlier_attempts"] = earlier;
    double seconds = 0;
    for (std::size_t i = 0; i + 1 < r.attempts.size(); ++i) seconds += r.attempts[i].outcome.total_seconds();
    out["timings"]["earlier_attempts_seconds"] = seconds;
  }
  save_json("outcome.json", out);
  if (dir) write_report({report_row(run_name(*dir), out)}, *dir);
  return r;
}

}  // namespace sensprobe

#endif  // SENSPROBE_PIPELINE_HPP
