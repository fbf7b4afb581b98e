// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>

#include "test_support.hpp"

using namespace wsms;
using wsms::testing::CorpusCase;

namespace {

constexpr double kCostTol = 1e-9;  // absolute, on hand-derived costs
constexpr double kRelTol = 1e-9;   // relative, on estimate comparisons

bool close(double a, double b, double rel = kRelTol) { return std::abs(a - b) <= rel * std::max(1.0, std::abs(b)); }

struct Verdict {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

Relation run_plan(const ExecutionPlan& plan, const Catalog& c) {
  SimFabric f(c, 42, 0.0);
  return execute_plan(plan, c, f, 42).output;
}

Relation run_tree(const PlanNode& tree, const Catalog& c) {
  SimFabric f(c, 42, 0.0);
  return execute_tree(tree, c, f);
}

// Cost of one call written out term by term, independent of the library.
double oracle_client(const ServiceProfile& p, double cs, double rs) {
  const double server = p.initiate_server + cs * p.unpacking + p.serviceexec + rs * p.packing + (rs + p.packetize) * p.sending;
  return p.initiate_client + cs * p.packing + (cs + p.packetize) * p.sending + server + rs * p.unpacking;
}

Verdict cost_formulas() {
  Verdict v;
  const auto& p0 = wsms::testing::kProfile0;
  v.require(std::abs(server_call_cost(p0, {200, 1000}) - 50.5) <= kCostTol, "scost(P0) != 50.5");
  v.require(std::abs(client_call_cost(p0, {200, 1000}) - 76.0) <= kCostTol, "cost(P0) != 76");
  auto quiet = p0;
  quiet.sending = 0;
  v.require(std::abs(client_call_cost(quiet, {200, 1000}) - 69.0) <= kCostTol, "cost(sending=0) != 69");
  v.require(std::abs(server_call_cost(p0, {200, 2000}) - 65.5) <= kCostTol, "scost(resultsize=2000) != 65.5");
  std::vector<CallStep> rank{{"a", 1, 0.1, {}}, {"b", 2, 0.5, {}}, {"c", 3, 0.9, {}}};
  v.require(std::abs(100 * estimate_plan_cost(rank).total - 135.0) <= kCostTol, "rank example != 135");
  std::vector<CallStep> cat{{"ws_src", 76, 4.0, {}}, {"ws_credit", 76, 0.5, {}}, {"ws_addr", 76, 1.0, {}}};
  v.require(std::abs(estimate_plan_cost(cat).total - 532.0) <= kCostTol, "CAT1 uniform order != 532");
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    ServiceProfile p{rng.uniform(0, 5), rng.uniform(0, 5), rng.uniform(0, 0.1), rng.uniform(0, 0.1),
                     rng.uniform(0, 200), rng.uniform(0, 0.1), rng.uniform(0, 50)};
    const double cs = rng.uniform(0, 4000), rs = rng.uniform(0, 4000);
    v.require(close(client_call_cost(p, {cs, rs}), oracle_client(p, cs, rs), 1e-12), "client cost differs from oracle");
    std::vector<CallStep> steps;
    std::vector<double> costs, sigmas;
    for (int k = 0; k < 6; ++k) {
      steps.push_back({"s", rng.uniform(0, 100), rng.uniform(0, 3), {}});
      costs.push_back(steps.back().unit_cost);
      sigmas.push_back(steps.back().selectivity);
    }
    v.require(close(estimate_plan_cost(steps).total, wsms::testing::horner_cost(costs, sigmas), 1e-12),
              "pipeline cost differs from Horner oracle");
  }
  return v;
}

Verdict semantic_equivalence(const std::vector<CorpusCase>& cases) {
  Verdict v;
  for (const auto& cc : cases) {
    const auto truth = reference_execute(cc.vq, cc.catalog);
    for (auto s : {Strategy::Naive, Strategy::Greedy, Strategy::GreedyHeur}) {
      v.require(multiset_equal(run_plan(plan_query(cc.vq, cc.catalog, s), cc.catalog), truth),
                fmt::format("catalog {} {}", cc.id, to_string(s)));
    }
  }
  return v;
}

Verdict precedence_safety(const std::vector<CorpusCase>& cases) {
  Verdict v;
  for (const auto& cc : cases) {
    const auto g = compose(cc.vq.service_set(), cc.catalog);
    for (auto s : kAllStrategies) {
      const auto plan = plan_query(cc.vq, cc.catalog, s);
      const auto order = plan.invocation_order();
      v.require(order.size() == g.nodes.size(), fmt::format("catalog {} {}: wrong invocation count", cc.id, to_string(s)));
      for (const auto& [from, to] : g.edges) {
        auto pf = std::find(order.begin(), order.end(), from), pt = std::find(order.begin(), order.end(), to);
        v.require(pf < pt, fmt::format("catalog {} {}: {} before {}", cc.id, to_string(s), to, from));
      }
      // Every call is made with all of its inputs bound, or execution throws.
      try {
        run_plan(plan, cc.catalog);
      } catch (const Error& e) {
        v.require(false, fmt::format("catalog {} {}: {}", cc.id, to_string(s), e.what()));
      }
    }
  }
  return v;
}

Verdict optimizer_quality(const std::vector<cli::BenchRow>& rows) {
  Verdict v;
  std::map<std::size_t, std::map<Strategy, double>> est;
  for (const auto& r : rows) est[r.catalog_id][r.strategy] = r.est_cost;
  std::size_t not_worse = 0;
  double ratio_sum = 0;
  for (const auto& [id, m] : est) {
    const double opt = m.at(Strategy::Optimal), heur = m.at(Strategy::GreedyHeur), naive = m.at(Strategy::Naive);
    v.require(opt <= heur * (1 + kRelTol), fmt::format("catalog {}: optimal {} > greedy_heur {}", id, opt, heur));
    if (heur <= naive * (1 + kRelTol)) ++not_worse;
    ratio_sum += naive / heur;
  }
  const double share = static_cast<double>(not_worse) / static_cast<double>(est.size());
  const double mean = ratio_sum / static_cast<double>(est.size());
  v.require(share >= 0.95, fmt::format("greedy_heur <= naive in only {:.3f} of catalogs", share));
  v.require(mean >= 1.0, fmt::format("mean naive/greedy_heur {:.4f} < 1", mean));
  if (v.ok) v.detail = fmt::format("share={:.3f} mean_ratio={:.4f}", share, mean);
  return v;
}

Verdict greedy_matches_optimal() {
  Verdict v;
  std::size_t checked = 0, skipped = 0;
  auto check = [&](const std::string& label, const ValidatedQuery& vq, const Catalog& c) {
    const double greedy = plan_query(vq, c, Strategy::Greedy).estimate.total;
    const double plain_best = best_order_for_rewrite_level(vq, c, Strategy::Greedy).estimate.total;
    v.require(close(greedy, plain_best), fmt::format("{}: greedy {} vs optimum {}", label, greedy, plain_best));
    const double heur = plan_query(vq, c, Strategy::GreedyHeur).estimate.total;
    const double opt = plan_query(vq, c, Strategy::Optimal).estimate.total;
    v.require(close(heur, opt), fmt::format("{}: greedy_heur {} vs optimal {}", label, heur, opt));
    ++checked;
  };
  // No precedence edges, every selectivity below 1 and owned by one service.
  for (const auto& cc : wsms::testing::independent_corpus(200, 1234)) {
    if (!separable_selectivities(cc.vq)) {
      ++skipped;
      continue;
    }
    check(fmt::format("independent {}", cc.id), cc.vq, cc.catalog);
  }
  if (v.ok) v.detail = fmt::format("{} instances, {} with attribute-equality predicates excluded", checked, skipped);
  return v;
}

Verdict pushdown_monotone(const std::vector<CorpusCase>& cases) {
  Verdict v;
  for (const auto& cc : cases) {
    const auto g = compose(cc.vq.service_set(), cc.catalog);
    const auto initial = build_initial_plan(cc.vq, g);
    const auto selected = push_selections(initial, cc.catalog);
    const auto projected = push_projections(selected, cc.catalog);
    const auto truth = run_tree(initial, cc.catalog);
    double before = estimate_plan(initial, cc.catalog).total;
    for (const auto* step : {&selected, &projected}) {
      const double after = estimate_plan(*step, cc.catalog).total;
      v.require(after <= before * (1 + kRelTol), fmt::format("catalog {}: pushdown raised {} to {}", cc.id, before, after));
      v.require(multiset_equal(truth, run_tree(*step, cc.catalog)), fmt::format("catalog {}: pushdown changed the output", cc.id));
      before = after;
    }
  }
  return v;
}

Verdict rule_soundness(std::vector<CorpusCase> cases) {
  Verdict v;
  // Source-only instances give join commutation room to apply.
  for (auto& cc : wsms::testing::independent_corpus(100, 4242)) cases.push_back(std::move(cc));
  std::map<Rule, std::size_t> applied;
  Rng rng(5);
  for (const auto& cc : cases) {
    const auto g = compose(cc.vq.service_set(), cc.catalog);
    std::vector<PlanNode> frontier;
    for (auto s : {Strategy::Naive, Strategy::GreedyHeur}) {
      const auto tree = plan_query(cc.vq, cc.catalog, s).tree;
      frontier.push_back(tree);
      PlanNode wrapped = tree;
      wrapped.child() = PlanNode::project(plan_schema(tree.child(), cc.catalog), tree.child());
      if (!check_plan(wrapped, cc.catalog)) frontier.push_back(wrapped);
      for (auto& t : apply_rule(Rule::SelectCascade, tree, cc.catalog)) frontier.push_back(std::move(t));
    }
    for (int step = 0; step < 3 && !frontier.empty(); ++step) {
      std::vector<PlanNode> next;
      for (const auto& tree : frontier) {
        const auto base = run_tree(tree, cc.catalog);
        for (auto rule : kAllRules) {
          auto rewrites = apply_rule(rule, tree, cc.catalog, &g);
          if (rewrites.empty() || applied[rule] >= 100) continue;
          const auto& pick = rewrites[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(rewrites.size()) - 1))];
          ++applied[rule];
          v.require(multiset_equal(base, run_tree(pick, cc.catalog)),
                    fmt::format("{} changed output of {}", to_string(rule), serialize(tree)));
          if (rng.chance(0.3)) next.push_back(pick);
        }
      }
      frontier = std::move(next);
    }
  }
  std::string counts;
  for (auto rule : kAllRules) {
    v.require(applied[rule] >= 100, fmt::format("{} applied only {} times", to_string(rule), applied[rule]));
    counts += fmt::format("{}{}={}", counts.empty() ? "" : " ", to_string(rule), applied[rule]);
  }
  if (v.ok) v.detail = counts;
  return v;
}

Verdict cost_reconciliation(const std::vector<CorpusCase>& cases) {
  Verdict v;
  const auto& c = wsms::testing::cat1();
  const auto plan = optimize(validate_query("SELECT cid, score FROM customers, credit WHERE score > 600", c), c);
  SimFabric f(c, 42, 0.0);
  const auto res = execute_plan(plan, c, f, 42);
  v.require(close(res.report.measured, res.report.estimate), "CAT1 measured != estimate");
  std::size_t exact = 0;
  for (const auto& cc : cases) {
    for (double jitter : {0.0, 0.2}) {
      SimFabric fab(cc.catalog, 11, jitter);
      const auto r = execute_plan(plan_query(cc.vq, cc.catalog, Strategy::GreedyHeur), cc.catalog, fab, 11);
      double sum = 0;
      for (const auto& e : fab.trace()) sum += e.time;
      v.require(r.report.measured == sum, fmt::format("catalog {}: measured != trace sum", cc.id));
      if (jitter == 0.0) {
        v.require(close(r.report.measured, r.report.modeled),
                  fmt::format("catalog {}: measured {} vs modeled {}", cc.id, r.report.measured, r.report.modeled));
        if (close(r.report.measured, r.report.estimate)) ++exact;
      }
    }
  }
  if (v.ok) v.detail = fmt::format("measured = estimate on CAT1 and {} of {} corpus plans; trace sums exact on all", exact, cases.size());
  return v;
}

Verdict determinism(const std::vector<CorpusCase>& cases) {
  Verdict v;
  const auto path = std::filesystem::temp_directory_path() / "wsms_acceptance_catalog.json";
  for (std::size_t i = 0; i < 20 && i < cases.size(); ++i) {
    std::ofstream(path) << catalog_to_json(cases[i].catalog);
    cli::RunOptions opt;
    opt.catalog = path.string();
    opt.query = cases[i].query;
    opt.jitter = 0.1;
    opt.explain = true;
    std::ostringstream a, b, err;
    const int ca = cli::cmd_run(opt, a, err), cb = cli::cmd_run(opt, b, err);
    v.require(ca == 0 && cb == 0, fmt::format("catalog {}: run failed: {}", i, err.str()));
    v.require(a.str() == b.str(), fmt::format("catalog {}: output differs between runs", i));
  }
  std::filesystem::remove(path);
  return v;
}

Verdict round_trip() {
  Verdict v;
  Rng rng(2024);
  for (int i = 0; i < 500; ++i) {
    const auto ast = random_ast(rng);
    const auto text = render(ast);
    v.require(parse_query(text) == ast, "round trip changed: " + text);
  }
  return v;
}

}  // namespace

int main() {
  const auto cases = wsms::testing::corpus(200, 42);
  std::vector<cli::BenchCase> bench;
  for (const auto& cc : cases) bench.push_back({cc.catalog, cc.query});

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"cost formulas", cost_formulas},
      {"plans match reference output", [&] { return semantic_equivalence(cases); }},
      {"precedence respected", [&] { return precedence_safety(cases); }},
      {"optimizer quality", [&] { return optimizer_quality(cli::run_bench(bench, 42, 0.0)); }},
      {"greedy optimal without precedence", greedy_matches_optimal},
      {"pushdown never hurts", [&] { return pushdown_monotone(cases); }},
      {"rewrite rules preserve output", [&] { return rule_soundness(cases); }},
      {"measured cost reconciles", [&] { return cost_reconciliation(cases); }},
      {"deterministic runs", [&] { return determinism(cases); }},
      {"query round trip", round_trip},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %zu: %s%s%s\n", v.ok ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                v.detail.empty() ? "" : " | ", v.detail.c_str());
    if (!v.ok) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
