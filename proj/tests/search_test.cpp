#include <gtest/gtest.h>

#include <fstream>
#include <string>
#include <vector>

#include "test_util.hpp"

using namespace sptest;

namespace {

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(f, l);) out.push_back(l);
  return out;
}

// The toy network with a base it labels 1 and a query towards label 0.
struct Toy {
  Mlp m = toy_mlp();
  Dataset d{2, {{{0.3, 0.1}, 1}, {{0.1, 0.3}, 0}, {{0.6, 0.2}, 1}}};
  QuerySpec q;
  Toy() {
    q.base = {0.3, 0.1};
    q.target = 0;
    q.gamma_radius = 0.1;
    q.epsilon_z = auto_epsilon(forward(m, q.base).logit, q.theta, 0);
  }
};

// Sample unreachable: radius 0 and a label the base does not have.
QuerySpec contradictory(QuerySpec q) {
  q.gamma_radius = 0;
  q.required_label = 0;
  return q;
}

SearchOptions with_solver(const SolverConfig& cfg) {
  SearchOptions o;
  o.solver = cfg;
  return o;
}

}  // namespace

TEST(Greedy, RandomCaseSevenIsFoundAtTheEnumeratedIteration) {
  const auto c = random_case(7);
  ASSERT_TRUE(c);
  const auto plans = greedy_plans(compute_dbias(c->m, c->d));
  const Enumeration e = enumerate_plans(c->m, c->q);
  const std::size_t want = expected_greedy_iteration(e, plans);
  ASSERT_EQ(want, 2u);
  const SearchOutcome out = greedy_search(c->m, c->d, c->q, {30.0});
  ASSERT_EQ(out.kind, OutcomeKind::Found) << out.reason;
  EXPECT_EQ(out.iteration, want);
  EXPECT_EQ(*out.plan, plans[want - 1]);
  EXPECT_FALSE(check_genuine(c->m, c->q, *out.sample, 0.0));
}

TEST(Greedy, SamplesAreGenuine) {
  const Toy t;
  const SearchOutcome out = greedy_search(t.m, t.d, t.q, {30.0});
  ASSERT_EQ(out.kind, OutcomeKind::Found) << out.reason;
  const auto& s = *out.sample;
  ASSERT_EQ(s.x.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_LE(std::abs(s.x[i] - t.q.base[i]), t.q.gamma_radius + 1e-12);
    EXPECT_GE(s.x[i], 0.0);
    EXPECT_LE(s.x[i], 1.0);
  }
  const ExactTrace tr = forward_exact(t.m, s.exact);
  EXPECT_GT(tr.logit, 0);
  // Shift towards label 0 by at least epsilon_Z.
  EXPECT_GE(s.delta_exact[0] * tr.last_hidden()[0], to_rational(t.q.epsilon_z));
  EXPECT_GE(s.delta[0], t.q.inflate_bounds.first);
  EXPECT_LE(s.delta[0], t.q.inflate_bounds.second);
  EXPECT_FALSE(check_genuine(t.m, t.q, s, 0.0));
}

TEST(Greedy, CheckGenuineCatchesTampering) {
  const Toy t;
  const SearchOutcome out = greedy_search(t.m, t.d, t.q, {30.0});
  ASSERT_TRUE(out.sample);
  SensitiveSample s = *out.sample;
  s.exact[0] += Rational(1, 2);
  EXPECT_TRUE(check_genuine(t.m, t.q, s));
  s = *out.sample;
  s.delta_exact[0] = Rational(1);
  EXPECT_TRUE(check_genuine(t.m, t.q, s));
  s = *out.sample;
  s.delta_exact[0] = Rational(0);
  EXPECT_TRUE(check_genuine(t.m, t.q, s));
}

TEST(Naive, ContradictoryQueryIsUnsat) {
  const Toy t;
  const QuerySpec q = contradictory(t.q);
  EXPECT_EQ(naive_search(t.m, q, 30.0).kind, OutcomeKind::Unsat);
  const SearchOutcome g = greedy_search(t.m, t.d, q, {30.0});
  EXPECT_EQ(g.kind, OutcomeKind::Unsat);
  EXPECT_EQ(g.log.size(), greedy_plans(compute_dbias(t.m, t.d)).size());
}

TEST(Naive, FindsTheToySample) {
  const Toy t;
  const SearchOutcome out = naive_search(t.m, t.q, 30.0);
  ASSERT_EQ(out.kind, OutcomeKind::Found);
  EXPECT_EQ(out.iteration, 1u);
  EXPECT_EQ(out.plan->count(NodeStatus::Free), 1u);
}

TEST(Naive, TimeoutIsInconclusive) {
  const Toy t;
  TempDir dir;
  const auto cfg = fake_config(fake_solver(dir, "slow", "exec sleep 5"));
  const SearchOutcome out = naive_search(t.m, t.q, 0.01, with_solver(cfg));
  EXPECT_EQ(out.kind, OutcomeKind::Inconclusive);
  EXPECT_EQ(out.log.at(0).status, SolveStatus::Timeout);
  EXPECT_NE(out.reason.find("timed out"), std::string::npos);
}

TEST(Greedy, AlwaysUnknownIsInconclusive) {
  const Toy t;
  TempDir dir;
  const auto cfg = fake_config(fake_solver(dir, "k", "echo unknown"));
  const SearchOutcome out = greedy_search(t.m, t.d, t.q, {1.0, 2.0}, with_solver(cfg));
  EXPECT_EQ(out.kind, OutcomeKind::Inconclusive);
  EXPECT_EQ(out.pass_seconds.size(), 2u);
  EXPECT_FALSE(out.sample);
}

TEST(Greedy, UnsatAfterUnknownIsDowngraded) {
  const Mlp m = random_mlp({3, 3, 2, 1}, 5);
  const Dataset d = gen_synthetic(3, 10, 0.2, 5);
  QuerySpec q;
  q.base = {0.5, 0.5, 0.5};
  const double z0 = forward(m, q.base).logit;
  q.target = z0 < 0 ? 1 : 0;
  q.epsilon_z = auto_epsilon(z0, q.theta, q.target);
  TempDir dir;
  // Fully fixed scripts (no relu definition) come back unknown, the rest unsat.
  const auto cfg = fake_config(fake_solver(dir, "mix", "if grep -q 'define-fun relu' \"$1\"; then echo unsat; else echo unknown; fi"));
  SearchOptions opts = with_solver(cfg);
  opts.run_dir = dir / "run";
  const SearchOutcome out = greedy_search(m, d, q, {1.0, 2.0}, opts);
  EXPECT_EQ(out.kind, OutcomeKind::Inconclusive);
  EXPECT_NE(out.reason.find("fully free script is unsat"), std::string::npos);
  const std::size_t n = greedy_plans(compute_dbias(m, d)).size();
  ASSERT_EQ(out.log.size(), 2 * n);
  EXPECT_EQ(out.log[0].status, SolveStatus::Unknown);
  EXPECT_EQ(out.log[n].status, SolveStatus::Unknown);
  EXPECT_FALSE(out.log[n].cached);
  for (std::size_t i = 1; i < n; ++i) {
    EXPECT_EQ(out.log[i].status, SolveStatus::Unsat);
    EXPECT_TRUE(out.log[n + i].cached);
  }

  const auto status = lines_of(dir / "run" / "status.log");
  ASSERT_EQ(status.size(), 2 * n);
  EXPECT_TRUE(status[0].starts_with("pass=1 iter=1 timeout=1.000000 status=unknown"));
  EXPECT_NE(status[n + 1].find("(cached)"), std::string::npos);
  for (std::size_t i = 1; i <= n; ++i)
    EXPECT_TRUE(fs::exists(dir / "run" / "scripts" / ("iter_" + std::to_string(i) + ".smt2")));
  EXPECT_FALSE(fs::exists(dir / "run" / "scripts" / ("iter_" + std::to_string(n + 1) + ".smt2")));
}

TEST(Greedy, WithoutReuseEveryIterationRuns) {
  const Toy t;
  TempDir dir;
  const auto cfg = fake_config(fake_solver(dir, "mix", "if grep -q 'define-fun relu' \"$1\"; then echo unsat; else echo unknown; fi"));
  SearchOptions opts = with_solver(cfg);
  opts.reuse_unsat = false;
  const SearchOutcome out = greedy_search(t.m, t.d, t.q, {1.0, 2.0}, opts);
  for (const auto& r : out.log) EXPECT_FALSE(r.cached);
}

TEST(Greedy, AlwaysUnsatIsUnsatAfterOnePass) {
  const Toy t;
  TempDir dir;
  const auto cfg = fake_config(fake_solver(dir, "u", "echo unsat"));
  const SearchOutcome out = greedy_search(t.m, t.d, t.q, {1.0, 2.0}, with_solver(cfg));
  EXPECT_EQ(out.kind, OutcomeKind::Unsat);
  EXPECT_EQ(out.pass_seconds.size(), 1u);
}

TEST(Greedy, EmptyScheduleIsRejected) {
  const Toy t;
  EXPECT_THROW(greedy_search(t.m, t.d, t.q, {}), InvalidInput);
}

TEST(Greedy, ReleasingNodesNeverLosesSatisfiability) {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const auto c = random_case(seed);
    if (!c) continue;
    const auto plans = greedy_plans(compute_dbias(c->m, c->d));
    bool seen_sat = false;
    for (const auto& p : plans) {
      const SolveStatus s = solve(encode_query(c->m, c->q, p), 60.0).status;
      ASSERT_NE(s, SolveStatus::Unknown);
      ASSERT_NE(s, SolveStatus::Timeout);
      if (seen_sat) {
        EXPECT_EQ(s, SolveStatus::Sat) << "seed " << seed;
      }
      seen_sat = seen_sat || s == SolveStatus::Sat;
    }
  }
}

TEST(Verify, FlagsAtTheta) {
  const Mlp m = toy_mlp();
  Mlp moved = m;
  moved.mutable_layers()[1].weights[0] = 2.5f;
  const std::vector<double> x{0.6, 0.1};
  const Verdict v = verify_sample(m, moved, x, 0.01);
  EXPECT_TRUE(v.flagged);
  EXPECT_NEAR(v.beta, std::abs(sigmoid(2.5 * 0.5 + 0.5) - sigmoid(2.0 * 0.5 + 0.5)), 1e-12);
  EXPECT_FALSE(verify_sample(m, m, x, 0.01).flagged);
  // On a sample with the hidden unit off the change is invisible.
  EXPECT_EQ(verify_sample(m, moved, std::vector<double>{0.1, 0.6}, 0.01).beta, 0.0);
  EXPECT_TRUE(verify_sample(m, moved, x, v.beta).flagged);
}
