#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "wsms/catalog.hpp"
#include "wsms/costmodel.hpp"
#include "wsms/plan.hpp"
#include "wsms/rules.hpp"
#include "wsms/sqlfront.hpp"

namespace wsms {

enum class Strategy {
  Naive,       // lexicographic topological order, no rewrites
  Greedy,      // rank order, no rewrites
  GreedyHeur,  // rank order + pushdown + subtree equivalence rules
  Optimal,     // exhaustive order search + pushdown (oracle, size guarded)
};

inline constexpr std::array<Strategy, 4> kAllStrategies{Strategy::Naive, Strategy::Greedy,
                                                        Strategy::GreedyHeur, Strategy::Optimal};

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::Naive: return "naive";
    case Strategy::Greedy: return "greedy";
    case Strategy::GreedyHeur: return "greedy_heur";
    case Strategy::Optimal: return "optimal";
  }
  return "?";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
  for (auto st : kAllStrategies) {
    if (s == to_string(st)) return st;
  }
  return std::nullopt;
}

/// Largest graph brute_force_optimal accepts.
inline constexpr std::size_t kBruteForceLimit = 9;

// ---------------------------------------------------------------------------
// Plan construction

/// Left-deep join chain over `order` with every WHERE predicate in one
/// Select above the top join and the query projection at the root.
inline LogicalPlan build_left_deep(const std::vector<std::string>& order, const ValidatedQuery& vq) {
  if (order.empty()) throw Error(ErrorKind::Validation, "no services to plan");
  PlanNode tree = PlanNode::call(order.front());
  for (std::size_t i = 1; i < order.size(); ++i) tree = PlanNode::join(std::move(tree), PlanNode::call(order[i]));
  if (!vq.ast.predicates.empty()) tree = PlanNode::select(vq.ast.predicates, std::move(tree));
  return PlanNode::project(vq.projection, std::move(tree));
}

inline LogicalPlan build_initial_plan(const ValidatedQuery& vq, const ServiceGraph& g) {
  return build_left_deep(g.lexicographic_topological_order(), vq);
}

namespace detail {

/// Output schema of every node, post-order, computed from the seed tuple.
inline void schemas_post_order(const PlanNode& n, const Catalog& c, const std::vector<std::string>& driving,
                               PlanPath& path,
                               std::vector<std::pair<PlanPath, std::vector<std::string>>>& out,
                               std::vector<std::string>& result) {
  switch (n.kind) {
    case PlanNode::Kind::ServiceCall: result = keep_columns(driving, returned_columns(n, c)); break;
    case PlanNode::Kind::Select:
      path.push_back(0);
      schemas_post_order(n.child(), c, driving, path, out, result);
      path.pop_back();
      break;
    case PlanNode::Kind::Project: {
      std::vector<std::string> ignored;
      path.push_back(0);
      schemas_post_order(n.child(), c, driving, path, out, ignored);
      path.pop_back();
      result = keep_columns(driving, n.attrs);
      break;
    }
    case PlanNode::Kind::Join: {
      std::vector<std::string> lout;
      path.push_back(0);
      schemas_post_order(n.left(), c, driving, path, out, lout);
      path.back() = 1;
      schemas_post_order(n.right(), c, lout, path, out, result);
      path.pop_back();
      break;
    }
  }
  out.emplace_back(path, result);
}

inline std::vector<std::pair<PlanPath, std::vector<std::string>>> node_schemas(const PlanNode& root,
                                                                               const Catalog& c) {
  std::vector<std::pair<PlanPath, std::vector<std::string>>> out;
  PlanPath path;
  std::vector<std::string> result;
  schemas_post_order(root, c, {}, path, out, result);
  return out;
}

inline bool covers(const std::vector<std::string>& schema, const std::vector<std::string>& attrs) {
  return std::all_of(attrs.begin(), attrs.end(), [&](const std::string& a) {
    return std::find(schema.begin(), schema.end(), a) != schema.end();
  });
}

inline void strip_selects(PlanNode& n, std::vector<Predicate>& collected) {
  while (n.kind == PlanNode::Kind::Select) {
    collected.insert(collected.end(), n.predicates.begin(), n.predicates.end());
    PlanNode child = std::move(n.child());
    n = std::move(child);
  }
  for (auto& ch : n.children) strip_selects(ch, collected);
}

}  // namespace detail

/// Moves every Select as far down as it can go. Predicates over one
/// service's attributes become provider-side filters on that leaf;
/// attribute equalities become conditions of the lowest join that sees both
/// sides; anything else sits above the lowest node providing its attributes.
inline LogicalPlan push_selections(const LogicalPlan& plan, const Catalog& c) {
  PlanNode tree = plan;
  std::vector<Predicate> pending;
  detail::strip_selects(tree, pending);
  for (const auto& p : pending) {
    const auto attrs = p.attributes();
    const auto schemas = detail::node_schemas(tree, c);
    if (p.is_equi_join()) {
      bool placed = false;
      for (const auto& [path, schema] : schemas) {
        PlanNode& n = const_cast<PlanNode&>(node_at(tree, path));
        if (n.kind == PlanNode::Kind::Join && detail::covers(schema, attrs)) {
          n.predicates.push_back(p);
          placed = true;
          break;
        }
      }
      if (placed) continue;
    } else {
      std::vector<const PlanNode*> leaves;
      collect_leaves(tree, leaves);
      const PlanNode* owner = nullptr;
      for (const auto* leaf : leaves) {
        const auto& ws = c.service(leaf->service);
        if (std::all_of(attrs.begin(), attrs.end(), [&](const std::string& a) { return ws.produces(a); })) {
          owner = leaf;
          break;
        }
      }
      if (owner) {
        const_cast<PlanNode*>(owner)->pushed.push_back({p, c.predicate_factor(p)});
        continue;
      }
    }
    for (const auto& [path, schema] : schemas) {
      if (!detail::covers(schema, attrs)) continue;
      const PlanNode& target = node_at(tree, path);
      if (target.kind == PlanNode::Kind::Project && path.empty()) {
        // Never above the root projection.
        PlanNode proj = target;
        proj.child() = PlanNode::select({p}, std::move(proj.child()));
        tree = std::move(proj);
      } else {
        tree = replace_at(tree, path, PlanNode::select({p}, target));
      }
      break;
    }
  }
  return tree;
}

/// Narrows each service call to the output columns something else in the
/// plan mentions. Order independent: a column is kept if any other leaf
/// consumes or also produces it, or any operator references it.
inline LogicalPlan push_projections(const LogicalPlan& plan, const Catalog& c) {
  PlanNode tree = plan;
  std::set<std::string> operator_refs;
  std::function<void(const PlanNode&)> gather = [&](const PlanNode& n) {
    if (!n.is_leaf()) {
      for (const auto& p : n.predicates) {
        for (const auto& a : p.attributes()) operator_refs.insert(a);
      }
      operator_refs.insert(n.attrs.begin(), n.attrs.end());
    }
    for (const auto& ch : n.children) gather(ch);
  };
  gather(tree);
  std::vector<const PlanNode*> leaves;
  collect_leaves(tree, leaves);
  for (const auto* leaf_ptr : leaves) {
    auto* leaf = const_cast<PlanNode*>(leaf_ptr);
    const auto& ws = c.service(leaf->service);
    std::set<std::string> needed = operator_refs;
    for (const auto* other : leaves) {
      if (other == leaf_ptr) continue;
      const auto& o = c.service(other->service);
      needed.insert(o.inputs.begin(), o.inputs.end());
      needed.insert(o.outputs.begin(), o.outputs.end());
    }
    std::vector<std::string> keep;
    for (const auto& a : returned_columns(*leaf, c)) {
      if (needed.contains(a)) keep.push_back(a);
    }
    if (keep.size() < ws.outputs.size()) leaf->returned = std::move(keep);
  }
  return tree;
}

/// Rebuilds a pushed-down plan around a new invocation order. Leaf
/// annotations carry over; selections and join conditions are re-placed.
inline LogicalPlan reorder_plan(const LogicalPlan& plan, const std::vector<std::string>& order, const Catalog& c) {
  if (plan.kind != PlanNode::Kind::Project) throw Error(ErrorKind::Validation, "plan root must be a projection");
  std::map<std::string, PlanNode> leaves;
  std::vector<Predicate> preds;
  std::function<void(const PlanNode&)> gather = [&](const PlanNode& n) {
    if (n.is_leaf()) {
      leaves.emplace(n.service, n);
      return;
    }
    if (n.kind == PlanNode::Kind::Select || n.kind == PlanNode::Kind::Join) {
      preds.insert(preds.end(), n.predicates.begin(), n.predicates.end());
    }
    for (const auto& ch : n.children) gather(ch);
  };
  gather(plan.child());
  PlanNode tree = leaves.at(order.front());
  for (std::size_t i = 1; i < order.size(); ++i) tree = PlanNode::join(std::move(tree), leaves.at(order[i]));
  if (!preds.empty()) tree = PlanNode::select(preds, std::move(tree));
  return push_selections(PlanNode::project(plan.attrs, std::move(tree)), c);
}

// ---------------------------------------------------------------------------
// Ordering

/// Greedy rank ordering under precedence. Among services whose predecessors
/// are placed, take the smallest c / (1 - sigma_eff); services with
/// sigma_eff >= 1 come after every finite rank, by (cost, id).
inline std::vector<std::string> greedy_order(const ServiceGraph& g, const std::map<std::string, CallStep>& steps) {
  std::vector<std::string> order;
  std::set<std::string> placed;
  while (order.size() < g.nodes.size()) {
    std::optional<std::tuple<int, double, std::string>> best;
    for (const auto& id : g.nodes) {
      if (placed.contains(id)) continue;
      auto preds = g.predecessors(id);
      if (!std::all_of(preds.begin(), preds.end(), [&](const std::string& p) { return placed.contains(p); })) continue;
      const auto& step = steps.at(id);
      const double sigma = step.effective_selectivity();
      auto key = sigma < 1 ? std::make_tuple(0, step.unit_cost / (1 - sigma), id)
                           : std::make_tuple(1, step.unit_cost, id);
      if (!best || key < *best) best = key;
    }
    if (!best) throw Error(ErrorKind::Cycle, "no eligible service; precedence graph is cyclic");
    placed.insert(std::get<2>(*best));
    order.push_back(std::get<2>(*best));
  }
  return order;
}

struct OrderResult {
  std::vector<std::string> order;
  CostEstimate estimate;
};

using OrderCost = std::function<CostEstimate(const std::vector<std::string>&)>;

/// Exhaustive search over every linear extension of `g`. Extensions are
/// visited in lexicographic order, so the first minimum found wins ties.
inline OrderResult brute_force_optimal(const ServiceGraph& g, const OrderCost& cost) {
  if (g.nodes.size() > kBruteForceLimit) {
    throw Error(ErrorKind::SizeLimit, std::to_string(g.nodes.size()) + " services exceed the exhaustive-search limit of " +
                                          std::to_string(kBruteForceLimit));
  }
  std::optional<OrderResult> best;
  std::vector<std::string> order;
  std::set<std::string> placed;
  std::map<std::string, std::vector<std::string>> preds;
  for (const auto& id : g.nodes) preds[id] = g.predecessors(id);
  std::function<void()> extend = [&] {
    if (order.size() == g.nodes.size()) {
      auto est = cost(order);
      if (!best || est.total < best->estimate.total) best = OrderResult{order, std::move(est)};
      return;
    }
    for (const auto& id : g.nodes) {
      if (placed.contains(id)) continue;
      const auto& p = preds[id];
      if (!std::all_of(p.begin(), p.end(), [&](const std::string& x) { return placed.contains(x); })) continue;
      placed.insert(id);
      order.push_back(id);
      extend();
      order.pop_back();
      placed.erase(id);
    }
  };
  extend();
  if (!best) return {};
  return *best;
}

/// Exhaustive search with fixed per-service steps.
inline OrderResult brute_force_optimal(const ServiceGraph& g, const std::map<std::string, CallStep>& steps) {
  return brute_force_optimal(g, [&](const std::vector<std::string>& order) {
    std::vector<CallStep> seq;
    for (const auto& id : order) seq.push_back(steps.at(id));
    return estimate_plan_cost(seq);
  });
}

/// Per-service steps of a plan's leaves, keyed by id.
inline std::map<std::string, CallStep> leaf_steps(const LogicalPlan& plan, const Catalog& c) {
  std::map<std::string, CallStep> out;
  std::vector<const PlanNode*> leaves;
  collect_leaves(plan, leaves);
  for (const auto* leaf : leaves) {
    CallStep step{leaf->service, leaf_unit_cost(*leaf, c), c.service(leaf->service).selectivity, {}};
    for (const auto& ap : leaf->pushed) step.factors.push_back(ap.factor);
    out.emplace(leaf->service, std::move(step));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subtree optimization

namespace detail {

inline bool cost_less(double a, double b) { return a < b && !(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a))); }

/// Positions the rules may touch around the join at `join_path`: the
/// Select/Project chain above it, the join, and the chains below it, but not
/// other joins or leaves.
inline std::vector<PlanPath> region_positions(const PlanNode& root, const PlanPath& top) {
  std::vector<PlanPath> out;
  std::function<void(const PlanPath&, bool)> visit = [&](const PlanPath& path, bool passed_join) {
    const PlanNode& n = node_at(root, path);
    if (n.is_leaf()) return;
    if (n.kind == PlanNode::Kind::Join) {
      if (passed_join) return;
      passed_join = true;
    }
    out.push_back(path);
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      PlanPath next = path;
      next.push_back(i);
      visit(next, passed_join);
    }
  };
  visit(top, false);
  return out;
}

}  // namespace detail

/// Bottom-up pass over every join: enumerates the rule closure around the
/// join (at most `max_variants` trees), keeps the cheapest valid variant,
/// and repeats until a pass changes nothing. Ties go to fewer nodes, then to
/// the smaller canonical serialization.
inline LogicalPlan optimize_subtrees(const LogicalPlan& plan, const Catalog& c, const ServiceGraph* g = nullptr,
                                     std::size_t max_variants = 16) {
  PlanNode tree = plan;
  auto better = [&](const PlanNode& a, double ca, const PlanNode& b, double cb) {
    if (detail::cost_less(ca, cb)) return true;
    if (detail::cost_less(cb, ca)) return false;
    auto na = node_count(a), nb = node_count(b);
    if (na != nb) return na < nb;
    return serialize(a) < serialize(b);
  };
  for (int pass = 0; pass < 32; ++pass) {
    bool changed = false;
    // Join paths bottom-up: deepest first, then left to right.
    std::vector<PlanPath> joins;
    for (const auto& p : all_paths(tree)) {
      if (node_at(tree, p).kind == PlanNode::Kind::Join) joins.push_back(p);
    }
    std::stable_sort(joins.begin(), joins.end(),
                     [](const PlanPath& a, const PlanPath& b) { return a.size() > b.size(); });
    for (const auto& join_path : joins) {
      if (join_path.size() > 0 && node_at(tree, join_path).kind != PlanNode::Kind::Join) continue;
      PlanPath top = join_path;
      while (!top.empty()) {
        const auto last = top.back();
        top.pop_back();
        auto k = node_at(tree, top).kind;
        if (k != PlanNode::Kind::Select && k != PlanNode::Kind::Project) {
          top.push_back(last);
          break;
        }
      }
      std::vector<PlanNode> variants{tree};
      std::set<std::string> seen{serialize(tree)};
      for (std::size_t i = 0; i < variants.size() && variants.size() < max_variants; ++i) {
        const auto positions = detail::region_positions(variants[i], top);
        for (auto rule : kAllRules) {
          for (auto& v : apply_rule(rule, variants[i], c, g, positions)) {
            if (variants.size() >= max_variants) break;
            if (seen.insert(serialize(v)).second) variants.push_back(std::move(v));
          }
        }
      }
      // An infeasible tree never wins, so a bad input order gets repaired.
      auto cost_of = [&](const PlanNode& v) {
        return check_plan(v, c, g) ? std::numeric_limits<double>::infinity() : estimate_plan(v, c).total;
      };
      std::size_t best = 0;
      double best_cost = cost_of(variants[0]);
      for (std::size_t i = 1; i < variants.size(); ++i) {
        const double cost = cost_of(variants[i]);
        if (better(variants[i], cost, variants[best], best_cost)) {
          best = i;
          best_cost = cost;
        }
      }
      if (best != 0) {
        tree = std::move(variants[best]);
        changed = true;
        break;  // paths may have shifted; restart the pass
      }
    }
    if (!changed) break;
  }
  return tree;
}

// ---------------------------------------------------------------------------
// End-to-end

/// True when no predicate compares two attributes, i.e. every selectivity
/// belongs to a single service and rank ordering is exact.
inline bool separable_selectivities(const ValidatedQuery& vq) {
  return std::none_of(vq.ast.predicates.begin(), vq.ast.predicates.end(),
                      [](const Predicate& p) { return p.has_attribute_rhs(); });
}

/// Pushed-down plan in initial order (shared by greedy_heur and optimal).
inline LogicalPlan pushed_down_plan(const ValidatedQuery& vq, const Catalog& c, const ServiceGraph& g) {
  return push_projections(push_selections(build_initial_plan(vq, g), c), c);
}

/// Plans `vq` with the given strategy. Exactly one plan is returned; its
/// invocation order is always a linear extension of the composed graph.
inline ExecutionPlan plan_query(const ValidatedQuery& vq, const Catalog& c, Strategy strategy) {
  const ServiceGraph g = compose(vq.service_set(), c);
  LogicalPlan tree;
  switch (strategy) {
    case Strategy::Naive: tree = build_initial_plan(vq, g); break;
    case Strategy::Greedy: {
      auto initial = build_initial_plan(vq, g);
      tree = build_left_deep(greedy_order(g, leaf_steps(initial, c)), vq);
      break;
    }
    case Strategy::GreedyHeur: {
      auto pushed = pushed_down_plan(vq, c, g);
      auto ordered = reorder_plan(pushed, greedy_order(g, leaf_steps(pushed, c)), c);
      tree = optimize_subtrees(ordered, c, &g);
      break;
    }
    case Strategy::Optimal: {
      auto pushed = pushed_down_plan(vq, c, g);
      auto best = brute_force_optimal(
          g, [&](const std::vector<std::string>& order) { return estimate_plan(reorder_plan(pushed, order, c), c); });
      tree = reorder_plan(pushed, best.order, c);
      break;
    }
  }
  if (auto err = check_plan(tree, c, &g)) {
    throw Error(ErrorKind::Validation, std::string("planner produced an invalid plan: ") + *err);
  }
  return make_execution_plan(to_string(strategy), std::move(tree), c);
}

/// The full pipeline (greedy_heur).
inline ExecutionPlan optimize(const ValidatedQuery& vq, const Catalog& c) {
  return plan_query(vq, c, Strategy::GreedyHeur);
}

/// Cheapest order reachable with the same rewrites the strategy uses:
/// no pushdown for naive/greedy, pushdown for greedy_heur/optimal.
inline OrderResult best_order_for_rewrite_level(const ValidatedQuery& vq, const Catalog& c, Strategy strategy) {
  const ServiceGraph g = compose(vq.service_set(), c);
  if (strategy == Strategy::Naive || strategy == Strategy::Greedy) {
    return brute_force_optimal(
        g, [&](const std::vector<std::string>& order) { return estimate_plan(build_left_deep(order, vq), c); });
  }
  auto pushed = pushed_down_plan(vq, c, g);
  return brute_force_optimal(
      g, [&](const std::vector<std::string>& order) { return estimate_plan(reorder_plan(pushed, order, c), c); });
}

}  // namespace wsms
