#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "test_util.hpp"

using namespace sptest;

namespace {

std::size_t occurrences(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

Mlp net_221() { return make_mlp({{{{1.0f, -1.0f}, {0.5f, 0.5f}}, {0.0f, -0.25f}}, {{{2.0f, -1.0f}}, {0.5f}}}); }

// Base (0.3, 0.1) on the toy network: Z = 0.9, label 1; the query asks to
// push it towards label 0.
QuerySpec toy_query() {
  QuerySpec q;
  q.base = {0.3, 0.1};
  q.target = 0;
  q.gamma_radius = 0.2;
  q.epsilon_z = auto_epsilon(0.9, q.theta, 0);
  return q;
}

}  // namespace

TEST(EncodeNetwork, AssertionCountsFor221) {
  const Mlp m = net_221();
  const NetworkFragment f = encode_network(m, FixPlan::all(m, NodeStatus::Free));
  EXPECT_EQ(f.activation_assertions, 2u);
  EXPECT_EQ(f.linear_assertions, 3u);
  EXPECT_EQ(occurrences(f.text, "(assert (relu "), 2u);
  EXPECT_EQ(f.logit, "Z");
  EXPECT_EQ(f.last_hidden, (std::vector<std::string>{"a_1_0", "a_1_1"}));
  EXPECT_NE(f.text.find("(assert (= z_1_0 (+ (* 1.0 x_0) (* (- 1.0) x_1) 0.0)))"), std::string::npos);
  EXPECT_NE(f.text.find("(assert (= Z (+ (* 2.0 a_1_0) (* (- 1.0) a_1_1) 0.5)))"), std::string::npos);
}

TEST(EncodeNetwork, TagsRenameEverySymbol) {
  const Mlp m = net_221();
  const NetworkFragment f = encode_network(m, FixPlan::all(m, NodeStatus::Free), "_tw");
  EXPECT_EQ(f.logit, "Ztw");
  for (const auto& s : f.declared) {
    if (s != "Ztw") {
      EXPECT_TRUE(s.ends_with("_tw")) << s;
    }
  }
}

TEST(EncodeNetwork, RejectsForeignPlans) {
  EXPECT_THROW(encode_network(net_221(), FixPlan::all(random_mlp({2, 3, 1}, 1), NodeStatus::Free)), DimensionError);
}

TEST(EncodeQuery, DefinitionsOnlyWhenUsed) {
  const Mlp m = toy_mlp();
  const QuerySpec q = toy_query();
  const std::string free = encode_query(m, q, FixPlan::all(m, NodeStatus::Free)).text();
  EXPECT_NE(free.find("(define-fun relu"), std::string::npos);
  EXPECT_EQ(free.find("(define-fun id"), std::string::npos);
  EXPECT_EQ(free.find("(define-fun zero"), std::string::npos);
  const std::string fixed = encode_query(m, q, FixPlan::all(m, NodeStatus::FixedIdentity)).text();
  EXPECT_EQ(fixed.find("(define-fun relu"), std::string::npos);
  EXPECT_NE(fixed.find("(define-fun id"), std::string::npos);
  EXPECT_EQ(fixed.find("(define-fun zero"), std::string::npos);
}

TEST(EncodeQuery, StructureOfTheToyScript) {
  const Mlp m = toy_mlp();
  const SmtScript s = encode_query(m, toy_query(), FixPlan::all(m, NodeStatus::Free));
  const std::string t = s.text();
  EXPECT_EQ(s.logic, "QF_NRA");
  EXPECT_TRUE(t.starts_with("(set-logic QF_NRA)\n"));
  EXPECT_NE(t.find("(assert (and (<= (- " + exact_decimal(0.2) + ") g_0) (<= g_0 " + exact_decimal(0.2) + ")))"),
            std::string::npos);
  EXPECT_NE(t.find("(assert (> Z 0.0))"), std::string::npos);
  EXPECT_NE(t.find("(declare-const d_e_0 Real)"), std::string::npos);
  // Target 0: the tweaked weight moves down.
  EXPECT_NE(t.find("(assert (= Ztw (+ (* (- 2.0 d_e_0) a_1_0) 0.5)))"), std::string::npos);
  EXPECT_NE(t.find("(assert (= (- Z Ztw) (* d_e_0 a_1_0)))"), std::string::npos);
  EXPECT_TRUE(t.ends_with("(check-sat)\n(get-value (g_0 g_1 d_e_0 Z Ztw))\n"));
  EXPECT_EQ(s.line_count(), static_cast<std::size_t>(std::count(t.begin(), t.end(), '\n')));
  EXPECT_EQ(s.byte_size(), t.size());
}

TEST(EncodeQuery, PessimisticModeIsLinear) {
  const Mlp m = toy_mlp();
  QuerySpec q = toy_query();
  q.delta_mode = DeltaMode::Pessimistic;
  const SmtScript s = encode_query(m, q, FixPlan::all(m, NodeStatus::Free));
  EXPECT_EQ(s.logic, "QF_LRA");
  EXPECT_EQ(s.text().find("d_e_"), std::string::npos);
  // 2 - 0.05 folded into one literal.
  EXPECT_NE(s.text().find("(* " + emit_rational(Rational(2) - to_rational(0.05)) + " a_1_0)"), std::string::npos);
  EXPECT_EQ(s.query_symbols, (std::vector<std::string>{"g_0", "g_1", "Z", "Ztw"}));
}

TEST(EncodeQuery, RequiredLabelZeroUsesStrictNegative) {
  const Mlp m = toy_mlp();
  QuerySpec q = toy_query();
  q.required_label = 0;
  EXPECT_NE(encode_query(m, q, FixPlan::all(m, NodeStatus::Free)).text().find("(assert (< Z 0.0))"), std::string::npos);
}

TEST(EncodeQuery, RejectionsExplainThemselves) {
  const Mlp m = toy_mlp();
  auto why = [&](QuerySpec q) {
    try {
      encode_query(m, q, FixPlan::all(m, NodeStatus::Free));
    } catch (const QueryRejected& e) {
      return std::string(e.what());
    }
    return std::string("accepted");
  };
  QuerySpec q = toy_query();
  q.epsilon_z = 1e-4;
  EXPECT_NE(why(q).find("below theta"), std::string::npos);
  q = toy_query();
  q.gamma_radius = -0.1;
  EXPECT_NE(why(q).find("gamma radius"), std::string::npos);
  q = toy_query();
  q.base = {1.2, 0.1};
  EXPECT_NE(why(q).find("[0,1]"), std::string::npos);
  q = toy_query();
  q.inflate_bounds = {0.3, 0.1};
  EXPECT_NE(why(q).find("inflation bounds"), std::string::npos);
  q = toy_query();
  q.deflate_bounds = {-0.1, 0.1};
  EXPECT_NE(why(q).find("deflation bounds"), std::string::npos);
  q = toy_query();
  q.target = 2;
  EXPECT_NE(why(q).find("target"), std::string::npos);
  q = toy_query();
  q.base = {0.1};
  EXPECT_THROW(encode_query(m, q, FixPlan::all(m, NodeStatus::Free)), DimensionError);
}

TEST(ModeledSensitivity, KnownValues) {
  EXPECT_NEAR(modeled_sensitivity(-4.8510, 1.0), 0.0131, 5e-4);
  EXPECT_NEAR(modeled_sensitivity(0.0, 1.0), 0.2311, 1e-4);
  EXPECT_NEAR(modeled_sensitivity(0.0, 1.0, 0), 0.2311, 1e-4);
}

TEST(AutoEpsilon, HitsTheRequestedShift) {
  for (double z0 : {-6.0, -2.0, -0.1, 0.0, 0.7, 3.0}) {
    for (int target : {0, 1}) {
      // Largest probability change available in the target direction.
      const double room = target == 1 ? 1.0 - sigmoid(z0) : sigmoid(z0);
      if (room <= 0.012) {
        EXPECT_THROW(auto_epsilon(z0, 0.01, target, 1.2), DomainError);
        continue;
      }
      const double eps = auto_epsilon(z0, 0.01, target, 1.2);
      EXPECT_GT(eps, 0.0);
      EXPECT_NEAR(modeled_sensitivity(z0, eps, target), 0.012, 1e-12);
    }
  }
  EXPECT_THROW(auto_epsilon(0.0, 0.6, 1, 1.0), DomainError);
  EXPECT_THROW(auto_epsilon(20.0, 0.01, 1, 1.0), DomainError);
}

TEST(Evaluation, SolverAgreesWithExactForwardPass) {
  const Mlp m = random_mlp({3, 4, 3, 1}, 12);
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    const auto x = random_point(3, rng);
    const SolveResult r = solve(encode_evaluation(m, x), 60.0);
    ASSERT_EQ(r.status, SolveStatus::Sat);
    std::vector<Rational> xr;
    for (double v : x) xr.push_back(to_rational(v));
    EXPECT_EQ(r.value("Z"), forward_exact(m, xr).logit);
  }
}

TEST(Lemmas, AreImpliedByTheEncoding) {
  const Mlp m = random_mlp({3, 3, 1}, 4);
  QuerySpec q;
  q.base = {0.5, 0.5, 0.5};
  const double z0 = forward(m, q.base).logit;
  q.target = z0 < 0 ? 1 : 0;
  q.gamma_radius = 0.3;
  q.epsilon_z = auto_epsilon(z0, q.theta, q.target, 1.2);
  q.assert_shift_lemma = false;
  q.assert_shift_bound = false;
  const FixPlan plan = FixPlan::all(m, NodeStatus::Free);
  const SmtScript base = encode_query(m, q, plan);

  std::vector<std::string> shift, bound;
  const QueryPlan qp = validate_query(m, q);
  for (std::size_t j = 0; j < 3; ++j) {
    const std::string a = "a_1_" + std::to_string(j);
    shift.push_back("(* " + delta_symbol(j, qp.is_inflated[j]) + " " + a + ")");
    const double hi = qp.is_inflated[j] ? q.inflate_bounds.second : q.deflate_bounds.second;
    bound.push_back("(* " + emit_exact_literal(hi) + " " + a + ")");
  }
  const std::string diff = q.target == 1 ? "(- Ztw Z)" : "(- Z Ztw)";
  const std::string not_lemma = "(assert (not (= " + diff + " " + smt::sum(shift) + ")))\n";
  EXPECT_EQ(solve(base.with_assertions(not_lemma), 60.0).status, SolveStatus::Unsat);
  const std::string not_bound =
      "(assert (< " + smt::sum(bound) + " " + emit_exact_literal(q.epsilon_z) + "))\n";
  EXPECT_EQ(solve(base.with_assertions(not_bound), 60.0).status, SolveStatus::Unsat);
}
