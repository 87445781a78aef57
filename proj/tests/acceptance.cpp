// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "test_util.hpp"

using namespace sptest;

namespace {

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      if (ok) detail << "first failure: " << what << "; ";
      ok = false;
    }
  }
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// A found sample to be pinned into the fully free script.
struct Witness {
  Mlp m;
  QuerySpec q;
  SensitiveSample s;
  std::size_t iteration = 0;
  std::size_t final_iteration = 0;
};

std::vector<Witness> g_witnesses;

void criterion_1(Check& c) {
  const double li = logit_inverse(0.8);
  const double ms = modeled_sensitivity(-4.8510, 1.0);
  c.detail << "logit_inverse(0.8)=" << li << " modeled_sensitivity(-4.851,1)=" << ms << "; ";
  c.require(std::abs(li - 1.386) <= 1e-3, "logit_inverse(0.8)");
  c.require(std::abs(ms - 0.0131) <= 5e-4, "modeled_sensitivity");
}

void criterion_2(Check& c) {
  const auto start = Clock::now();
  int trojan_flagged = 0;
  double worst_sip = 0, least_beta = 1;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    RunConfig cfg;
    cfg.seed = seed;
    const EndToEndResult r = run_end2end(cfg, std::nullopt);
    const std::string tag = "seed " + std::to_string(seed);
    c.require(r.model.dims_string() == "8x6x4x1", tag + ": architecture");
    c.require(r.clean.accuracy == 1.0, tag + ": training accuracy below 100%");
    const SearchOutcome& o = r.outcome.search;
    c.require(o.kind == OutcomeKind::Found, tag + ": search " + to_string(o.kind) + " " + o.reason);
    if (o.kind != OutcomeKind::Found) continue;
    for (const auto& v : r.outcome.verdicts) {
      if (v.name == "perturb") {
        least_beta = std::min(least_beta, v.beta);
        c.require(v.beta >= 0.01 && v.flagged, tag + ": perturbed model not flagged");
      }
      if (v.name == "trojan" && v.flagged) ++trojan_flagged;
    }
    const double sip_value = r.outcome.sip.value_or(1.0);
    worst_sip = std::max(worst_sip, sip_value);
    c.require(sip_value < 0.001, tag + ": SIP too large");
    const SearchAttempt& a = r.attempts.back();
    g_witnesses.push_back({r.model, a.query, *o.sample, o.iteration, hidden_nodes(r.model).size() + 1});
  }
  const double took = since(start);
  c.detail << "min perturb beta=" << least_beta << " max SIP=" << worst_sip << " trojan flagged " << trojan_flagged
           << "/10, " << took << "s; ";
  c.require(trojan_flagged >= 8, "trojan flagged in fewer than 8 of 10 seeds");
  c.require(took <= 600.0, "over the 10 minute budget");
}

void criterion_3(Check& c) {
  const auto start = Clock::now();
  const std::vector<std::optional<double>> no_timeout{std::nullopt};
  std::size_t cases = 0, sat = 0, unsat = 0;
  auto compare = [&](const Mlp& m, const Dataset& d, const QuerySpec& q, const std::string& tag) {
    const Enumeration e = enumerate_plans(m, q);
    for (auto s : e.status) c.require(s == SolveStatus::Sat || s == SolveStatus::Unsat, tag + ": enumeration undecided");
    const bool expect = e.any_sat();
    const SearchOutcome g = greedy_search(m, d, q, no_timeout);
    const SearchOutcome n = naive_search(m, q, std::nullopt);
    c.require(g.kind != OutcomeKind::Inconclusive && n.kind != OutcomeKind::Inconclusive, tag + ": inconclusive");
    c.require((g.kind == OutcomeKind::Found) == expect, tag + ": greedy disagrees with enumeration");
    c.require((n.kind == OutcomeKind::Found) == expect, tag + ": naive disagrees with enumeration");
    if (g.kind == OutcomeKind::Found) {
      c.require(!check_genuine(m, q, *g.sample), tag + ": greedy sample fails the query");
      const std::size_t final_iteration = greedy_plans(compute_dbias(m, d)).size();
      g_witnesses.push_back({m, q, *g.sample, g.iteration, final_iteration});
    }
    ++cases;
    (expect ? sat : unsat) += 1;
  };
  std::size_t contradictions = 0;
  Rng rng(31);
  for (std::uint64_t seed = 1; cases < 40 && seed < 300; ++seed) {
    auto rc = random_case(seed, 2.0);
    if (!rc) continue;
    // Random threshold and inflation range too, so that both delta modes see
    // reachable queries.
    rc->q.theta = rng.uniform(0.001, 0.01);
    const double lo = rng.uniform(0.05, 0.3);
    rc->q.inflate_bounds = {lo, lo + rng.uniform(0.2, 1.0)};
    try {
      rc->q.epsilon_z = auto_epsilon(forward(rc->m, rc->q.base).logit, rc->q.theta, rc->q.target, rng.uniform(1.0, 2.0));
    } catch (const DomainError&) {
      continue;
    }
    compare(rc->m, rc->d, rc->q, "seed " + std::to_string(seed));
    // Every third case also with a query whose label constraint excludes the whole box.
    if (seed % 3 == 0 && contradictions < 6) {
      QuerySpec q = rc->q;
      q.gamma_radius = 0;
      q.required_label = 1 - predicted_label(sigmoid(forward(rc->m, q.base).logit));
      compare(rc->m, rc->d, q, "seed " + std::to_string(seed) + " contradictory");
      ++contradictions;
    }
  }
  const double took = since(start);
  c.detail << cases << " cases (" << sat << " sat, " << unsat << " unsat), " << took << "s; ";
  c.require(cases >= 20, "fewer than 20 cases");
  c.require(sat > 0 && unsat > 0, "no mix of sat and unsat");
  c.require(took <= 300.0, "over the 5 minute budget");
}

void criterion_4(Check& c) {
  RunConfig cfg;
  const Dataset d = obtain_dataset(cfg);
  const std::vector<std::pair<std::string, Mlp>> nets{
      {"toy", toy_mlp()},
      {"2-2-1", make_mlp({{{{1.0f, -1.0f}, {0.5f, 0.5f}}, {0.0f, -0.25f}}, {{{2.0f, -1.0f}}, {0.5f}}})},
      {"3-4-3-1", random_mlp({3, 4, 3, 1}, 12)},
      {"desk", obtain_model(cfg, d)}};
  double worst = 0;
  Rng rng(2024);
  for (const auto& [name, m] : nets) {
    for (int i = 0; i < 100; ++i) {
      const auto x = random_point(m.input_width(), rng);
      const SolveResult r = solve(encode_evaluation(m, x), 60.0);
      c.require(r.status == SolveStatus::Sat, name + ": evaluation script not sat");
      if (r.status != SolveStatus::Sat) continue;
      const Rational z = r.value("Z");
      const double diff = std::abs(to_double(z) - forward(m, x).logit);
      worst = std::max(worst, diff);
      c.require(diff <= 1e-6, name + ": symbolic and concrete logits differ");
      std::vector<Rational> xr;
      for (double v : x) xr.push_back(to_rational(v));
      c.require(z == forward_exact(m, xr).logit, name + ": solver value differs from exact forward pass");
    }
  }
  c.detail << "400 inputs over 4 networks, worst |dZ|=" << worst << "; ";
}

// Pre-activations recomputed directly from the stored weights.
std::vector<std::vector<double>> recount_pre(const Mlp& m, const std::vector<double>& x) {
  std::vector<std::vector<double>> out;
  std::vector<double> a = x;
  for (std::size_t l = 0; l + 1 < m.layers().size(); ++l) {
    const Layer& L = m.layers()[l];
    std::vector<double> z(L.out);
    for (std::size_t r = 0; r < L.out; ++r) {
      double acc = L.bias[r];
      for (std::size_t k = 0; k < L.in; ++k) acc += static_cast<double>(L.weights[r * L.in + k]) * a[k];
      z[r] = acc;
    }
    out.push_back(z);
    for (auto& v : z) v = std::max(v, 0.0);
    a = z;
  }
  return out;
}

void criterion_5(Check& c) {
  RunConfig cfg;
  const Dataset desk = obtain_dataset(cfg);
  std::vector<std::pair<Mlp, Dataset>> cases{{obtain_model(cfg, desk), desk}};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const std::size_t in = 2 + seed % 4;
    cases.push_back({random_mlp({in, 3 + seed % 3, 2 + seed % 2, 1}, seed), gen_synthetic(in, 10 + seed, 0.1, seed)});
  }
  std::size_t nodes = 0;
  for (const auto& [m, d] : cases) {
    const DBiasProfile p = compute_dbias(m, d);
    const auto ids = hidden_nodes(m);
    c.require(p.nodes.size() == ids.size(), "profile size");
    std::vector<std::size_t> identity(ids.size(), 0);
    for (const auto& s : d.samples) {
      const auto pre = recount_pre(m, s.x);
      for (std::size_t i = 0; i < ids.size(); ++i)
        if (pre[ids[i].layer][ids[i].neuron] >= 0.0) ++identity[i];
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const NodeProfile& n = p.at(ids[i]);
      c.require(n.n_identity == identity[i] && n.n_zero == d.size() - identity[i], "counts differ from recount");
      const double want = double(std::max(identity[i], d.size() - identity[i])) / double(d.size());
      c.require(n.d_bias == want, "d-bias differs from recount");
      c.require(n.d_bias >= 0.5 && n.d_bias <= 1.0, "d-bias outside [0.5, 1]");
    }
    const auto order = fix_order(p);
    c.require(order.size() == ids.size(), "fix order size");
    for (std::size_t i = 1; i < order.size(); ++i) {
      const double a = p.at(order[i - 1]).d_bias, b = p.at(order[i]).d_bias;
      c.require(a <= b, "fix order not non-decreasing");
      if (a == b) c.require(order[i - 1] < order[i], "tie not broken by (layer, neuron)");
    }
    nodes += ids.size();
  }
  c.detail << cases.size() << " networks, " << nodes << " nodes recounted; ";
}

void criterion_6(Check& c) {
  std::size_t checked = 0;
  for (const auto& w : g_witnesses) {
    if (w.iteration >= w.final_iteration) continue;
    const QueryPlan qp = validate_query(w.m, w.q);
    std::vector<std::pair<std::string, Rational>> pins;
    for (std::size_t i = 0; i < w.s.exact.size(); ++i)
      pins.emplace_back("g_" + std::to_string(i), w.s.exact[i] - to_rational(w.q.base[i]));
    if (w.q.delta_mode == DeltaMode::Existential)
      for (std::size_t j = 0; j < w.s.delta_exact.size(); ++j)
        pins.emplace_back(delta_symbol(j, qp.is_inflated[j]), w.s.delta_exact[j]);
    const SmtScript free = encode_query(w.m, w.q, FixPlan::all(w.m, NodeStatus::Free));
    const SolveStatus st = solve(free.with_assertions(pin_values(pins)), 120.0).status;
    c.require(st == SolveStatus::Sat, "witness rejected by the fully free script");
    ++checked;
  }
  c.detail << checked << " early witnesses pinned into the fully free script; ";
  c.require(checked > 0, "no early witness to check");
}

void criterion_7(Check& c) {
  const Mlp big = Mlp::zeros(std::vector<std::size_t>{196, 30, 20, 10, 1});
  c.detail << big.dims_string() << ": " << big.parameter_count() << " params, " << big.relu_count() << " ReLUs; ";
  c.require(big.dims_string() == "30x20x10x1", "dims string");
  c.require(big.parameter_count() == 6751, "parameter count");
  c.require(big.relu_count() == 60, "ReLU count");

  const double h = 1e-6;
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const std::size_t in = 3 + seed % 3;
    const Dataset d = gen_synthetic(in, 6, 0.2, seed + 40);
    DenseParams p = DenseParams::from_mlp(random_mlp({in, 4, 3, 1}, seed + 60));
    const LossGrad lg = loss_and_gradient(p, d.samples);
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
      auto check = [&](std::vector<double>& params, const std::vector<double>& grad) {
        for (std::size_t i = 0; i < params.size(); ++i) {
          const double keep = params[i];
          params[i] = keep + h;
          const double up = loss_and_gradient(p, d.samples).loss;
          params[i] = keep - h;
          const double down = loss_and_gradient(p, d.samples).loss;
          params[i] = keep;
          const double fd = (up - down) / (2 * h);
          const double scale = std::max(std::abs(fd), std::abs(grad[i]));
          // Both derivatives vanish for weights into nodes that never fire.
          const double rel = scale < 1e-9 ? 0.0 : std::abs(fd - grad[i]) / scale;
          worst = std::max(worst, rel);
        }
      };
      check(p.weights[l], lg.grad.weights[l]);
      check(p.bias[l], lg.grad.bias[l]);
    }
  }
  c.detail << "worst gradient relative error " << worst << "; ";
  c.require(worst <= 1e-4, "gradient relative error above 1e-4");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria{
      {"1 constants", criterion_1},           {"2 desk-scale end to end", criterion_2},
      {"3 oracle equivalence", criterion_3},  {"4 round-trip fidelity", criterion_4},
      {"5 profiling", criterion_5},           {"6 underapproximation soundness", criterion_6},
      {"7 counts and gradients", criterion_7}};
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Check c;
    const auto start = Clock::now();
    try {
      run(c);
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail << "exception: " << e.what() << "; ";
    }
    std::printf("%s criterion %s (%.1fs): %s\n", c.ok ? "PASS" : "FAIL", name.c_str(), since(start),
                c.detail.str().c_str());
    std::fflush(stdout);
    failed += !c.ok;
  }
  return failed ? 1 : 0;
}
