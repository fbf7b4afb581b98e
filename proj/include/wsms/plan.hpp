#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "wsms/catalog.hpp"
#include "wsms/costmodel.hpp"
#include "wsms/relation.hpp"

namespace wsms {

/// A predicate evaluated by the provider, with its estimated factor.
struct AttachedPredicate {
  Predicate predicate;
  double factor = 1.0;

  bool operator==(const AttachedPredicate&) const = default;
};

/// Node of the logical plan tree.
///
/// Evaluation is tuple-at-a-time: every node is evaluated against a driving
/// relation D (one empty tuple at the root) and returns D extended with its
/// own columns.
///  - ServiceCall invokes the service once per driving tuple and natural-joins
///    the response onto it; `pushed` predicates are filtered provider-side and
///    `returned` narrows the response columns.
///  - Join(L, R) evaluates R driven by the output of L, then applies its
///    conditions. Leaf order in the tree is the invocation order.
///  - Select filters; Project keeps D's columns plus `attrs`.
struct PlanNode {
  enum class Kind { ServiceCall, Select, Project, Join };

  Kind kind = Kind::ServiceCall;
  std::string service;
  std::vector<AttachedPredicate> pushed;
  std::optional<std::vector<std::string>> returned;
  std::vector<Predicate> predicates;  // Select conjuncts or Join conditions
  std::vector<std::string> attrs;     // Project
  std::vector<PlanNode> children;

  static PlanNode call(std::string id) {
    PlanNode n;
    n.kind = Kind::ServiceCall;
    n.service = std::move(id);
    return n;
  }
  static PlanNode select(std::vector<Predicate> conjuncts, PlanNode child) {
    PlanNode n;
    n.kind = Kind::Select;
    n.predicates = std::move(conjuncts);
    n.children.push_back(std::move(child));
    return n;
  }
  static PlanNode project(std::vector<std::string> attrs, PlanNode child) {
    PlanNode n;
    n.kind = Kind::Project;
    n.attrs = std::move(attrs);
    n.children.push_back(std::move(child));
    return n;
  }
  static PlanNode join(PlanNode left, PlanNode right, std::vector<Predicate> conditions = {}) {
    PlanNode n;
    n.kind = Kind::Join;
    n.predicates = std::move(conditions);
    n.children.push_back(std::move(left));
    n.children.push_back(std::move(right));
    return n;
  }

  bool is_leaf() const { return kind == Kind::ServiceCall; }
  const PlanNode& child() const { return children.front(); }
  PlanNode& child() { return children.front(); }
  const PlanNode& left() const { return children[0]; }
  const PlanNode& right() const { return children[1]; }

  friend bool operator==(const PlanNode& a, const PlanNode& b) {
    return a.kind == b.kind && a.service == b.service && a.pushed == b.pushed && a.returned == b.returned &&
           a.predicates == b.predicates && a.attrs == b.attrs && a.children == b.children;
  }
};

using LogicalPlan = PlanNode;

// ---------------------------------------------------------------------------
// Inspection

inline void collect_leaves(const PlanNode& n, std::vector<const PlanNode*>& out) {
  if (n.is_leaf()) {
    out.push_back(&n);
    return;
  }
  for (const auto& c : n.children) collect_leaves(c, out);
}

/// Service ids in invocation order.
inline std::vector<std::string> invocation_order(const PlanNode& n) {
  std::vector<const PlanNode*> leaves;
  collect_leaves(n, leaves);
  std::vector<std::string> out;
  for (const auto* l : leaves) out.push_back(l->service);
  return out;
}

inline std::size_t node_count(const PlanNode& n) {
  std::size_t count = 1;
  for (const auto& c : n.children) count += node_count(c);
  return count;
}

/// Output columns a leaf asks its provider for.
inline std::vector<std::string> returned_columns(const PlanNode& leaf, const Catalog& c) {
  return leaf.returned ? *leaf.returned : c.service(leaf.service).outputs;
}

/// Attributes a subtree mentions anywhere: leaf inputs and outputs, predicate
/// operands and projection lists.
inline void referenced_attrs(const PlanNode& n, const Catalog& c, std::set<std::string>& out) {
  if (n.is_leaf()) {
    const auto& ws = c.service(n.service);
    out.insert(ws.inputs.begin(), ws.inputs.end());
    out.insert(ws.outputs.begin(), ws.outputs.end());
  }
  for (const auto& p : n.predicates) {
    for (const auto& a : p.attributes()) out.insert(a);
  }
  out.insert(n.attrs.begin(), n.attrs.end());
  for (const auto& ch : n.children) referenced_attrs(ch, c, out);
}

inline std::vector<std::string> keep_columns(const std::vector<std::string>& driving,
                                             const std::vector<std::string>& attrs) {
  std::vector<std::string> keep = driving;
  for (const auto& a : attrs) {
    if (std::find(keep.begin(), keep.end(), a) == keep.end()) keep.push_back(a);
  }
  return keep;
}

namespace detail {

inline bool contains(const std::vector<std::string>& v, const std::string& a) {
  return std::find(v.begin(), v.end(), a) != v.end();
}

struct PlanChecker {
  const Catalog& catalog;
  std::set<std::string> seen;

  // Returns the output schema of `n` given the driving schema; throws on the
  // first invalid construct. `outside` holds attributes referenced by nodes
  // that are not in this subtree.
  std::vector<std::string> walk(const PlanNode& n, const std::vector<std::string>& driving,
                                const std::set<std::string>& outside) {
    switch (n.kind) {
      case PlanNode::Kind::ServiceCall: {
        if (!n.children.empty()) fail("service call with children");
        const auto& ws = catalog.service(n.service);
        if (!seen.insert(n.service).second) fail(n.service + " invoked twice");
        for (const auto& in : ws.inputs) {
          if (!contains(driving, in)) fail("input '" + in + "' of " + n.service + " is unbound");
        }
        for (const auto& ap : n.pushed) {
          for (const auto& a : ap.predicate.attributes()) {
            if (!ws.produces(a) && !ws.consumes(a)) fail("pushed predicate on " + n.service + " names '" + a + "'");
          }
        }
        auto cols = returned_columns(n, catalog);
        for (const auto& a : cols) {
          if (!ws.produces(a)) fail(n.service + " cannot return '" + a + "'");
        }
        for (const auto& a : ws.outputs) {
          if (!contains(cols, a) && outside.contains(a)) fail(n.service + " drops needed '" + a + "'");
        }
        return keep_columns(driving, cols);
      }
      case PlanNode::Kind::Select: {
        if (n.children.size() != 1 || n.predicates.empty()) fail("malformed select");
        auto inner_outside = outside;
        for (const auto& p : n.predicates) {
          for (const auto& a : p.attributes()) inner_outside.insert(a);
        }
        auto out = walk(n.child(), driving, inner_outside);
        require_attrs(n.predicates, out);
        return out;
      }
      case PlanNode::Kind::Project: {
        if (n.children.size() != 1 || n.attrs.empty()) fail("malformed project");
        auto inner_outside = outside;
        inner_outside.insert(n.attrs.begin(), n.attrs.end());
        auto out = walk(n.child(), driving, inner_outside);
        for (const auto& a : n.attrs) {
          if (!contains(out, a)) fail("projected attribute '" + a + "' is unavailable");
        }
        auto keep = keep_columns(driving, n.attrs);
        for (const auto& a : out) {
          if (!contains(keep, a) && outside.contains(a)) fail("projection drops needed '" + a + "'");
        }
        return keep;
      }
      case PlanNode::Kind::Join: {
        if (n.children.size() != 2) fail("malformed join");
        std::set<std::string> cond_attrs;
        for (const auto& p : n.predicates) {
          for (const auto& a : p.attributes()) cond_attrs.insert(a);
        }
        std::set<std::string> left_outside = outside, right_outside = outside;
        left_outside.insert(cond_attrs.begin(), cond_attrs.end());
        right_outside.insert(cond_attrs.begin(), cond_attrs.end());
        referenced_attrs(n.right(), catalog, left_outside);
        referenced_attrs(n.left(), catalog, right_outside);
        auto lout = walk(n.left(), driving, left_outside);
        auto out = walk(n.right(), lout, right_outside);
        require_attrs(n.predicates, out);
        return out;
      }
    }
    return {};
  }

  static void require_attrs(const std::vector<Predicate>& preds, const std::vector<std::string>& schema) {
    for (const auto& p : preds) {
      for (const auto& a : p.attributes()) {
        if (!contains(schema, a)) fail("predicate '" + p.to_string() + "' names unavailable '" + a + "'");
      }
    }
  }

  [[noreturn]] static void fail(const std::string& msg) { throw Error(ErrorKind::Schema, msg); }
};

}  // namespace detail

/// Output schema of a plan evaluated from the seed tuple. Throws
/// Error(Schema) if the plan is not well formed.
inline std::vector<std::string> plan_schema(const PlanNode& root, const Catalog& c) {
  detail::PlanChecker checker{c, {}};
  return checker.walk(root, {}, {});
}

/// Empty if the plan is well formed and its invocation order respects `g`
/// (when given); otherwise the reason it is not.
inline std::optional<std::string> check_plan(const PlanNode& root, const Catalog& c,
                                             const ServiceGraph* g = nullptr) {
  try {
    plan_schema(root, c);
  } catch (const Error& e) {
    return std::string(e.what());
  }
  if (g) {
    auto order = invocation_order(root);
    if (!g->is_linear_extension(order)) return std::string("invocation order violates precedence");
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Costing

/// Per-call cost of a leaf after pushdown: provider-side filtering scales
/// the expected result by the pushed factors, narrowing by the width ratio.
inline double leaf_unit_cost(const PlanNode& leaf, const Catalog& c) {
  const auto& ws = c.service(leaf.service);
  double resultsize = ws.avg_resultsize;
  for (const auto& ap : leaf.pushed) resultsize *= ap.factor;
  const double full = c.width_sum(ws.outputs);
  if (leaf.returned && full > 0) {
    resultsize *= c.width_sum(*leaf.returned) / full;
  }
  return client_call_cost(ws.profile, {ws.avg_callsize, resultsize});
}

namespace detail {

inline void cost_steps(const PlanNode& n, const Catalog& c, std::vector<CallStep>& steps) {
  switch (n.kind) {
    case PlanNode::Kind::ServiceCall: {
      const auto& ws = c.service(n.service);
      CallStep step{n.service, leaf_unit_cost(n, c), ws.selectivity, {}};
      for (const auto& ap : n.pushed) step.factors.push_back(ap.factor);
      steps.push_back(std::move(step));
      return;
    }
    case PlanNode::Kind::Project:
      cost_steps(n.child(), c, steps);
      return;
    case PlanNode::Kind::Select:
    case PlanNode::Kind::Join:
      for (const auto& ch : n.children) cost_steps(ch, c, steps);
      // Local predicates shrink every later invocation count.
      if (!steps.empty()) {
        for (const auto& p : n.predicates) steps.back().factors.push_back(c.predicate_factor(p));
      }
      return;
  }
}

}  // namespace detail

/// The plan reduced to its invocation sequence with attached factors.
inline std::vector<CallStep> plan_call_steps(const PlanNode& root, const Catalog& c) {
  std::vector<CallStep> steps;
  detail::cost_steps(root, c, steps);
  return steps;
}

inline CostEstimate estimate_plan(const PlanNode& root, const Catalog& c) {
  auto steps = plan_call_steps(root, c);
  return estimate_plan_cost(steps);
}

// ---------------------------------------------------------------------------
// Text forms

inline std::string join_strings(const std::vector<std::string>& v, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

inline std::string conjunction(const std::vector<Predicate>& preds) {
  std::string out;
  for (std::size_t i = 0; i < preds.size(); ++i) out += (i ? " AND " : "") + preds[i].to_string();
  return out;
}

/// Canonical one-line form; used for determinism checks and tie-breaking.
inline std::string serialize(const PlanNode& n) {
  std::string out;
  switch (n.kind) {
    case PlanNode::Kind::ServiceCall:
      out = "call[" + n.service;
      for (const auto& ap : n.pushed) out += fmt::format("|{}@{}", ap.predicate.to_string(), ap.factor);
      if (n.returned) out += "|cols=" + join_strings(*n.returned);
      return out + "]";
    case PlanNode::Kind::Select: out = "select[" + conjunction(n.predicates) + "]"; break;
    case PlanNode::Kind::Project: out = "project[" + join_strings(n.attrs) + "]"; break;
    case PlanNode::Kind::Join: out = "join[" + conjunction(n.predicates) + "]"; break;
  }
  out += "(";
  for (std::size_t i = 0; i < n.children.size(); ++i) out += (i ? "," : "") + serialize(n.children[i]);
  return out + ")";
}

inline std::string node_label(const PlanNode& n) {
  switch (n.kind) {
    case PlanNode::Kind::ServiceCall: {
      std::string label = n.service;
      for (const auto& ap : n.pushed) label += fmt::format("\\n{} ({})", ap.predicate.to_string(), ap.factor);
      if (n.returned) label += "\\ncols=" + join_strings(*n.returned);
      return label;
    }
    case PlanNode::Kind::Select: return "SELECT " + conjunction(n.predicates);
    case PlanNode::Kind::Project: return "PROJECT " + join_strings(n.attrs);
    case PlanNode::Kind::Join:
      return n.predicates.empty() ? std::string("JOIN") : "JOIN " + conjunction(n.predicates);
  }
  return "";
}

/// Graphviz digraph of the tree, edges from parent to child.
inline std::string to_dot(const PlanNode& root) {
  std::string out = "digraph plan {\n  node [shape=box];\n";
  std::size_t next = 0;
  auto emit = [&](auto&& self, const PlanNode& n) -> std::size_t {
    const std::size_t id = next++;
    std::string label = node_label(n);
    std::string escaped;
    for (char ch : label) {
      if (ch == '"') escaped += '\\';
      escaped += ch;
    }
    out += fmt::format("  n{} [label=\"{}\"];\n", id, escaped);
    for (const auto& c : n.children) {
      std::size_t cid = self(self, c);
      out += fmt::format("  n{} -> n{};\n", id, cid);
    }
    return id;
  };
  emit(emit, root);
  return out + "}\n";
}

// ---------------------------------------------------------------------------
// Execution plans

/// One evaluation primitive of a linearized plan.
struct Primitive {
  enum class Kind { Invoke, Join, Select, Project };

  Kind kind = Kind::Invoke;
  std::string service;                  // Invoke
  std::vector<AttachedPredicate> pushed;  // Invoke
  std::vector<std::string> returned;    // Invoke: columns requested
  bool narrowed = false;                // Invoke: returned is a strict subset
  std::vector<std::string> attrs;       // Join: natural attrs; Project: kept columns
  std::vector<Predicate> predicates;    // Select conjuncts; Join conditions
  bool final = false;                   // Project at the root

  bool operator==(const Primitive&) const = default;

  double factor() const {
    double f = 1.0;
    for (const auto& ap : pushed) f *= ap.factor;
    return f;
  }

  std::string to_string() const {
    switch (kind) {
      case Kind::Invoke: {
        std::string out = "INVOKE " + service;
        if (!pushed.empty()) {
          out += fmt::format(" factor={}", factor());
          std::vector<Predicate> preds;
          for (const auto& ap : pushed) preds.push_back(ap.predicate);
          out += " filter=(" + conjunction(preds) + ")";
        }
        if (narrowed) out += " cols=" + join_strings(returned);
        return out;
      }
      case Kind::Join: {
        std::string out = "JOIN " + (attrs.empty() ? std::string("(cross)") : join_strings(attrs));
        if (!predicates.empty()) out += " on " + conjunction(predicates);
        return out;
      }
      case Kind::Select: return "SELECT " + conjunction(predicates);
      case Kind::Project: return "PROJECT " + join_strings(attrs);
    }
    return "";
  }
};

/// A linear, executable plan and the estimate it was chosen with.
struct ExecutionPlan {
  std::string strategy;
  LogicalPlan tree;
  std::vector<Primitive> steps;
  CostEstimate estimate;

  std::vector<std::string> invocation_order() const {
    std::vector<std::string> out;
    for (const auto& s : steps) {
      if (s.kind == Primitive::Kind::Invoke) out.push_back(s.service);
    }
    return out;
  }

  std::string to_text() const {
    std::string out;
    for (const auto& s : steps) out += s.to_string() + "\n";
    return out;
  }
};

namespace detail {

struct Linearizer {
  const Catalog& catalog;
  std::vector<Primitive> steps;
  bool invoked = false;

  std::vector<std::string> emit(const PlanNode& n, const std::vector<std::string>& driving, bool root) {
    switch (n.kind) {
      case PlanNode::Kind::ServiceCall: {
        const auto& ws = catalog.service(n.service);
        Primitive inv;
        inv.kind = Primitive::Kind::Invoke;
        inv.service = n.service;
        inv.pushed = n.pushed;
        inv.returned = returned_columns(n, catalog);
        inv.narrowed = inv.returned.size() < ws.outputs.size();
        steps.push_back(inv);
        if (invoked) {
          Primitive j;
          j.kind = Primitive::Kind::Join;
          for (const auto& a : driving) {
            if (ws.consumes(a) || contains(inv.returned, a)) j.attrs.push_back(a);
          }
          steps.push_back(std::move(j));
        }
        invoked = true;
        return keep_columns(driving, inv.returned);
      }
      case PlanNode::Kind::Select: {
        auto out = emit(n.child(), driving, false);
        Primitive s;
        s.kind = Primitive::Kind::Select;
        s.predicates = n.predicates;
        steps.push_back(std::move(s));
        return out;
      }
      case PlanNode::Kind::Project: {
        emit(n.child(), driving, false);
        Primitive p;
        p.kind = Primitive::Kind::Project;
        p.attrs = keep_columns(driving, n.attrs);
        p.final = root;
        steps.push_back(p);
        return p.attrs;
      }
      case PlanNode::Kind::Join: {
        auto lout = emit(n.left(), driving, false);
        auto out = emit(n.right(), lout, false);
        if (!n.predicates.empty()) {
          if (!steps.empty() && steps.back().kind == Primitive::Kind::Join) {
            auto& j = steps.back();
            j.predicates.insert(j.predicates.end(), n.predicates.begin(), n.predicates.end());
          } else {
            Primitive s;
            s.kind = Primitive::Kind::Select;
            s.predicates = n.predicates;
            steps.push_back(std::move(s));
          }
        }
        return out;
      }
    }
    return {};
  }
};

}  // namespace detail

/// Flattens a tree into evaluation primitives in execution order.
inline std::vector<Primitive> linearize(const PlanNode& root, const Catalog& c) {
  detail::Linearizer lin{c, {}, false};
  lin.emit(root, {}, true);
  return std::move(lin.steps);
}

inline ExecutionPlan make_execution_plan(std::string strategy, LogicalPlan tree, const Catalog& c) {
  ExecutionPlan plan;
  plan.strategy = std::move(strategy);
  plan.steps = linearize(tree, c);
  plan.estimate = estimate_plan(tree, c);
  plan.tree = std::move(tree);
  return plan;
}

}  // namespace wsms
