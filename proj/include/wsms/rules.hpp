#pragma once

#include <array>
#include <set>
#include <string>
#include <vector>

#include "wsms/catalog.hpp"
#include "wsms/plan.hpp"

namespace wsms {

/// Equivalence rules with one or two operands.
enum class Rule {
  SelectCascade,          // s[p AND q](E) <-> s[p](s[q](E))
  SelectCommute,          // s[p](s[q](E)) <-> s[q](s[p](E))
  JoinCommute,            // E1 |x| E2 <-> E2 |x| E1
  SelectJoinDistribute,   // s[p](E1 |x| E2) <-> s[p](E1) |x| E2 (either side)
  ProjectCascade,         // p[A](p[B](E)) -> p[A](E)
  ProjectJoinDistribute,  // p[A](E1 |x| E2) -> p[A](p[A1](E1) |x| p[A2](E2))
};

inline constexpr std::array<Rule, 6> kAllRules{Rule::SelectCascade,        Rule::SelectCommute,
                                               Rule::JoinCommute,          Rule::SelectJoinDistribute,
                                               Rule::ProjectCascade,       Rule::ProjectJoinDistribute};

inline const char* to_string(Rule r) {
  switch (r) {
    case Rule::SelectCascade: return "select-cascade";
    case Rule::SelectCommute: return "select-commute";
    case Rule::JoinCommute: return "join-commute";
    case Rule::SelectJoinDistribute: return "select-join-distribute";
    case Rule::ProjectCascade: return "project-cascade";
    case Rule::ProjectJoinDistribute: return "project-join-distribute";
  }
  return "?";
}

/// Columns a subtree adds to its driving relation.
inline std::vector<std::string> introduced_columns(const PlanNode& n, const Catalog& c) {
  switch (n.kind) {
    case PlanNode::Kind::ServiceCall: return returned_columns(n, c);
    case PlanNode::Kind::Select: return introduced_columns(n.child(), c);
    case PlanNode::Kind::Project: return n.attrs;
    case PlanNode::Kind::Join: {
      auto out = introduced_columns(n.left(), c);
      for (const auto& a : introduced_columns(n.right(), c)) {
        if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
      }
      return out;
    }
  }
  return {};
}

/// All rewrites of `n` itself by `rule`. Results are not validated; callers
/// filter them with check_plan in the context of the whole tree.
inline std::vector<PlanNode> rewrite_node(Rule rule, const PlanNode& n, const Catalog& c) {
  using K = PlanNode::Kind;
  std::vector<PlanNode> out;
  const bool select_over_select = n.kind == K::Select && n.child().kind == K::Select;
  switch (rule) {
    case Rule::SelectCascade:
      if (n.kind == K::Select && n.predicates.size() >= 2) {
        std::vector<Predicate> rest(n.predicates.begin() + 1, n.predicates.end());
        out.push_back(PlanNode::select({n.predicates.front()}, PlanNode::select(rest, n.child())));
      }
      if (select_over_select) {
        auto merged = n.predicates;
        merged.insert(merged.end(), n.child().predicates.begin(), n.child().predicates.end());
        out.push_back(PlanNode::select(merged, n.child().child()));
      }
      break;
    case Rule::SelectCommute:
      if (select_over_select) {
        out.push_back(PlanNode::select(n.child().predicates, PlanNode::select(n.predicates, n.child().child())));
      }
      break;
    case Rule::JoinCommute:
      if (n.kind == K::Join) out.push_back(PlanNode::join(n.right(), n.left(), n.predicates));
      break;
    case Rule::SelectJoinDistribute:
      if (n.kind == K::Select && n.child().kind == K::Join) {
        const auto& j = n.child();
        out.push_back(PlanNode::join(PlanNode::select(n.predicates, j.left()), j.right(), j.predicates));
        out.push_back(PlanNode::join(j.left(), PlanNode::select(n.predicates, j.right()), j.predicates));
      }
      if (n.kind == K::Join) {
        for (std::size_t side = 0; side < 2; ++side) {
          const auto& ch = n.children[side];
          if (ch.kind != K::Select) continue;
          PlanNode j = n;
          j.children[side] = ch.child();
          out.push_back(PlanNode::select(ch.predicates, std::move(j)));
        }
      }
      break;
    case Rule::ProjectCascade:
      if (n.kind == K::Project && n.child().kind == K::Project) {
        out.push_back(PlanNode::project(n.attrs, n.child().child()));
      }
      break;
    case Rule::ProjectJoinDistribute:
      if (n.kind == K::Project && n.child().kind == K::Join) {
        const auto& j = n.child();
        std::set<std::string> needed(n.attrs.begin(), n.attrs.end());
        for (const auto& p : j.predicates) {
          for (const auto& a : p.attributes()) needed.insert(a);
        }
        std::set<std::string> needed_left = needed;
        referenced_attrs(j.right(), c, needed_left);
        auto narrow = [&](const PlanNode& side, const std::set<std::string>& keep, bool& reduced) {
          auto cols = introduced_columns(side, c);
          std::vector<std::string> kept;
          for (const auto& a : cols) {
            if (keep.contains(a)) kept.push_back(a);
          }
          if (kept.empty() || kept.size() == cols.size()) return side;
          reduced = true;
          return PlanNode::project(kept, side);
        };
        bool reduced = false;
        PlanNode left = narrow(j.left(), needed_left, reduced);
        PlanNode right = narrow(j.right(), needed, reduced);
        if (reduced) out.push_back(PlanNode::project(n.attrs, PlanNode::join(left, right, j.predicates)));
      }
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Paths into a tree: child indices from the root.

using PlanPath = std::vector<std::size_t>;

inline void collect_paths(const PlanNode& n, PlanPath& prefix, std::vector<PlanPath>& out) {
  out.push_back(prefix);
  for (std::size_t i = 0; i < n.children.size(); ++i) {
    prefix.push_back(i);
    collect_paths(n.children[i], prefix, out);
    prefix.pop_back();
  }
}

/// Pre-order paths of every node.
inline std::vector<PlanPath> all_paths(const PlanNode& root) {
  std::vector<PlanPath> out;
  PlanPath prefix;
  collect_paths(root, prefix, out);
  return out;
}

inline const PlanNode& node_at(const PlanNode& root, const PlanPath& path) {
  const PlanNode* n = &root;
  for (auto i : path) n = &n->children.at(i);
  return *n;
}

inline PlanNode replace_at(PlanNode root, const PlanPath& path, PlanNode replacement) {
  PlanNode* n = &root;
  for (auto i : path) n = &n->children.at(i);
  *n = std::move(replacement);
  return root;
}

/// Every valid whole-tree rewrite obtained by applying `rule` at one of
/// `positions` (all nodes when empty).
inline std::vector<PlanNode> apply_rule(Rule rule, const PlanNode& root, const Catalog& c,
                                        const ServiceGraph* g = nullptr,
                                        const std::vector<PlanPath>& positions = {}) {
  std::vector<PlanNode> out;
  const auto paths = positions.empty() ? all_paths(root) : positions;
  for (const auto& path : paths) {
    for (auto& local : rewrite_node(rule, node_at(root, path), c)) {
      PlanNode candidate = replace_at(root, path, std::move(local));
      if (!check_plan(candidate, c, g)) out.push_back(std::move(candidate));
    }
  }
  return out;
}

}  // namespace wsms
