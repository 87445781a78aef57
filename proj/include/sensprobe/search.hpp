#ifndef SENSPROBE_SEARCH_HPP
#define SENSPROBE_SEARCH_HPP

// Sensitive-sample search: one monolithic solver call, or the greedy
// exploration of ReLU combinations ordered by decision profiling.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sensprobe/dataset.hpp"
#include "sensprobe/exact.hpp"
#include "sensprobe/mlp.hpp"
#include "sensprobe/profile.hpp"
#include "sensprobe/smt_encode.hpp"
#include "sensprobe/solver.hpp"

namespace sensprobe {

/// A solver-produced sample together with the weight change it was found for.
struct SensitiveSample {
  std::vector<Rational> exact;
  std::vector<double> x;
  /// Change of each output weight (zero-padded groups included).
  std::vector<Rational> delta_exact;
  std::vector<double> delta;
};

struct IterationRecord {
  std::size_t pass = 1;
  std::size_t iteration = 1;
  std::optional<double> timeout;
  SolveStatus status = SolveStatus::Unknown;
  double seconds = 0;
  std::string plan;
  bool cached = false;
  std::string note;
};

enum class OutcomeKind { Found, Unsat, Inconclusive };

inline const char* to_string(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::Found: return "found";
    case OutcomeKind::Unsat: return "unsat";
    case OutcomeKind::Inconclusive: return "inconclusive";
  }
  return "?";
}

struct SearchOutcome {
  OutcomeKind kind = OutcomeKind::Inconclusive;
  std::optional<SensitiveSample> sample;
  /// 1-based iteration that produced the sample.
  std::size_t iteration = 0;
  /// Plan of that iteration.
  std::optional<FixPlan> plan;
  std::vector<IterationRecord> log;
  /// Solver wall time summed per schedule pass.
  std::vector<double> pass_seconds;
  std::string reason;

  double total_seconds() const {
    double t = 0;
    for (double s : pass_seconds) t += s;
    return t;
  }
};

struct SearchOptions {
  SolverConfig solver = SolverConfig::from_env();
  /// When set, scripts and a status log are written here.
  std::optional<std::filesystem::path> run_dir;
  /// Skip plans already proven unsat in an earlier pass.
  bool reuse_unsat = true;
};

/// Reads the sample and weight change out of a sat answer to encode_query.
inline SensitiveSample decode_sample(const Mlp& m, const QuerySpec& q, const SolveResult& r) {
  const QueryPlan qp = validate_query(m, q);
  SensitiveSample s;
  for (std::size_t i = 0; i < m.input_width(); ++i) {
    s.exact.push_back(to_rational(q.base[i]) + r.value("g_" + std::to_string(i)));
    s.x.push_back(to_double(s.exact.back()));
  }
  for (std::size_t j = 0; j < m.output_layer().in; ++j) {
    const bool up = qp.is_inflated[j];
    s.delta_exact.push_back(q.delta_mode == DeltaMode::Existential ? r.value(delta_symbol(j, up))
                                                                   : to_rational(pessimistic_delta(q, up)));
    s.delta.push_back(to_double(s.delta_exact.back()));
  }
  return s;
}

/// Re-checks every query condition on the sample in exact arithmetic, with
/// `slack` tolerance. Returns the first violated condition, if any.
inline std::optional<std::string> check_genuine(const Mlp& m, const QuerySpec& q, const SensitiveSample& s,
                                                double slack = 1e-6) {
  const QueryPlan qp = validate_query(m, q);
  const Rational tol = to_rational(slack);
  const Rational radius = to_rational(q.gamma_radius);
  if (s.exact.size() != m.input_width()) return "sample width mismatch";
  for (std::size_t i = 0; i < s.exact.size(); ++i) {
    if (s.exact[i] < -tol || s.exact[i] > 1 + tol) return "feature " + std::to_string(i) + " outside [0,1]";
    if (boost::multiprecision::abs(s.exact[i] - to_rational(q.base[i])) > radius + tol)
      return "feature " + std::to_string(i) + " moved further than the gamma radius";
  }
  const ExactTrace t = forward_exact(m, s.exact);
  if (qp.required_label == 0 ? t.logit >= tol : t.logit <= -tol) return "sample does not keep the required label";
  const auto& a = t.last_hidden();
  Rational shift = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const Rational& d = s.delta_exact[j];
    const auto& bounds = qp.is_inflated[j] ? q.inflate_bounds : q.deflate_bounds;
    if (d < to_rational(bounds.first) - tol || d > to_rational(bounds.second) + tol)
      return "weight change " + std::to_string(j) + " outside its bounds";
    shift += d * a[j];
  }
  if (shift < to_rational(q.epsilon_z) - tol) return "logit shift below epsilon_Z";
  return std::nullopt;
}

namespace detail {

class RunLog {
 public:
  explicit RunLog(const std::optional<std::filesystem::path>& dir) : dir_(dir) {
    if (!dir_) return;
    std::filesystem::create_directories(*dir_ / "scripts");
    log_.open(*dir_ / "status.log", std::ios::app);
  }

  void script(std::size_t iteration, const SmtScript& s) {
    if (!dir_) return;
    std::ofstream f(*dir_ / "scripts" / ("iter_" + std::to_string(iteration) + ".smt2"));
    f << s.text();
  }

  void record(const IterationRecord& r) {
    if (!log_.is_open()) return;
    log_ << "pass=" << r.pass << " iter=" << r.iteration << " timeout="
         << (r.timeout ? std::to_string(*r.timeout) : std::string("none")) << " status=" << to_string(r.status)
         << (r.cached ? " (cached)" : "") << " seconds=" << std::fixed << std::setprecision(3) << r.seconds
         << " plan=" << r.plan;
    if (!r.note.empty()) log_ << " note=\"" << r.note << '"';
    log_ << '\n';
    log_.flush();
  }

 private:
  std::optional<std::filesystem::path> dir_;
  std::ofstream log_;
};

}  // namespace detail

/// Hands the whole query to the solver with every ReLU free.
inline SearchOutcome naive_search(const Mlp& m, const QuerySpec& q, std::optional<double> timeout,
                                  const SearchOptions& opts = {}) {
  const FixPlan plan = FixPlan::all(m, NodeStatus::Free);
  const SmtScript script = encode_query(m, q, plan);
  detail::RunLog log(opts.run_dir);
  log.script(1, script);

  SearchOutcome out;
  const SolveResult r = solve(script, timeout, opts.solver);
  IterationRecord rec{1, 1, timeout, r.status, r.seconds, plan.signature(), false, r.note};
  out.pass_seconds.push_back(r.seconds);
  switch (r.status) {
    case SolveStatus::Sat: {
      SensitiveSample s = decode_sample(m, q, r);
      if (auto bad = check_genuine(m, q, s)) {
        rec.note = "re-validation failed: " + *bad;
        out.reason = rec.note;
        break;
      }
      out.kind = OutcomeKind::Found;
      out.sample = std::move(s);
      out.iteration = 1;
      out.plan = plan;
      break;
    }
    case SolveStatus::Unsat:
      out.kind = OutcomeKind::Unsat;
      break;
    case SolveStatus::Unknown:
      out.reason = "solver answered unknown" + (r.note.empty() ? std::string() : ": " + r.note);
      break;
    case SolveStatus::Timeout:
      out.reason = "solver timed out";
      break;
  }
  log.record(rec);
  out.log.push_back(std::move(rec));
  return out;
}

/// Plans visited by the greedy search: all nodes fixed by profile, then one
/// more node released per step in `fix_order`, ending fully free.
inline std::vector<FixPlan> greedy_plans(const DBiasProfile& profile) {
  std::vector<FixPlan> plans{initial_fixplan(profile)};
  for (NodeId id : fix_order(profile)) {
    FixPlan next = plans.back();
    next.unfix(id);
    plans.push_back(std::move(next));
  }
  return plans;
}

/// Greedy ReLU branch exploration. Each schedule entry is one pass over the
/// plan sequence with that per-iteration timeout; the search stops at the
/// first genuine sample. An unsat answer for the fully free plan is only
/// reported as Unsat when no iteration of that pass ended unknown or timed out.
inline SearchOutcome greedy_search(const Mlp& m, const Dataset& d, const QuerySpec& q,
                                   const std::vector<std::optional<double>>& schedule, const SearchOptions& opts = {}) {
  if (schedule.empty()) throw InvalidInput("greedy_search: empty timeout schedule");
  validate_query(m, q);
  const std::vector<FixPlan> plans = greedy_plans(compute_dbias(m, d));
  std::vector<SmtScript> scripts;
  scripts.reserve(plans.size());
  detail::RunLog log(opts.run_dir);
  for (std::size_t i = 0; i < plans.size(); ++i) {
    scripts.push_back(encode_query(m, q, plans[i]));
    log.script(i + 1, scripts.back());
  }

  SearchOutcome out;
  std::vector<bool> proven_unsat(plans.size(), false);
  bool incomplete = false;
  for (std::size_t pass = 0; pass < schedule.size(); ++pass) {
    out.pass_seconds.push_back(0.0);
    bool pass_incomplete = false;
    for (std::size_t i = 0; i < plans.size(); ++i) {
      IterationRecord rec{pass + 1, i + 1, schedule[pass], SolveStatus::Unsat, 0.0, plans[i].signature(), false, {}};
      if (opts.reuse_unsat && proven_unsat[i]) {
        rec.cached = true;
        log.record(rec);
        out.log.push_back(std::move(rec));
        continue;
      }
      const SolveResult r = solve(scripts[i], schedule[pass], opts.solver);
      rec.status = r.status;
      rec.seconds = r.seconds;
      rec.note = r.note;
      out.pass_seconds.back() += r.seconds;

      if (r.status == SolveStatus::Sat) {
        SensitiveSample s = decode_sample(m, q, r);
        if (auto bad = check_genuine(m, q, s)) {
          rec.note = "re-validation failed: " + *bad;
          pass_incomplete = true;
        } else {
          log.record(rec);
          out.log.push_back(std::move(rec));
          out.kind = OutcomeKind::Found;
          out.sample = std::move(s);
          out.iteration = i + 1;
          out.plan = plans[i];
          return out;
        }
      } else if (r.status == SolveStatus::Unsat) {
        proven_unsat[i] = true;
      } else {
        pass_incomplete = true;
      }
      log.record(rec);
      out.log.push_back(std::move(rec));
    }
    if (proven_unsat.back() && !pass_incomplete) {
      out.kind = OutcomeKind::Unsat;
      return out;
    }
    incomplete = incomplete || pass_incomplete;
  }
  out.kind = OutcomeKind::Inconclusive;
  out.reason = proven_unsat.back()
                   ? "the fully free script is unsat but earlier iterations ended unknown or timed out"
                   : "some iterations ended unknown or timed out, including the fully free one";
  if (!incomplete) out.reason = "no pass reached a decision";
  return out;
}

struct Verdict {
  bool flagged = false;
  double beta = 0;
};

/// Flags `suspect` when its output on `s` differs from the original's by at
/// least `theta`.
inline Verdict verify_sample(const Mlp& original, const Mlp& suspect, const std::vector<double>& s, double theta) {
  const double beta = sensitivity(original, suspect, s);
  return {beta >= theta, beta};
}

}  // namespace sensprobe

#endif  // SENSPROBE_SEARCH_HPP
