#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace wsms;
using wsms::testing::add_service;
using wsms::testing::cat1;

namespace {

Relation run(const PlanNode& tree, const Catalog& c) {
  SimFabric f(c, 1, 0.0);
  return execute_tree(tree, c, f);
}

/// The input tree plus variants that give every rule something to match:
/// root selections split into cascades and an extra identity projection.
std::vector<PlanNode> seed_trees(const PlanNode& plan, const Catalog& c) {
  std::vector<PlanNode> out{plan};
  if (plan.kind == PlanNode::Kind::Project) {
    PlanNode wrapped = plan;
    wrapped.child() = PlanNode::project(plan_schema(plan.child(), c), plan.child());
    if (!check_plan(wrapped, c)) out.push_back(wrapped);
  }
  for (auto& v : apply_rule(Rule::SelectCascade, plan, c)) out.push_back(std::move(v));
  return out;
}

struct Pair {
  PlanNode before, after;
  const Catalog* catalog;
};

/// Up to `want` (tree, rewrite) pairs per rule over the corpus, exploring
/// a few random rewrite steps from every strategy's plan.
std::map<Rule, std::vector<Pair>> collect_pairs(const std::vector<wsms::testing::CorpusCase>& cases, std::size_t want) {
  std::map<Rule, std::vector<Pair>> pairs;
  Rng rng(99);
  for (const auto& cc : cases) {
    const auto g = compose(cc.vq.service_set(), cc.catalog);
    std::vector<PlanNode> frontier;
    for (auto s : {Strategy::Naive, Strategy::GreedyHeur}) {
      for (auto& t : seed_trees(plan_query(cc.vq, cc.catalog, s).tree, cc.catalog)) frontier.push_back(std::move(t));
    }
    for (int step = 0; step < 3 && !frontier.empty(); ++step) {
      std::vector<PlanNode> next;
      for (const auto& tree : frontier) {
        for (auto rule : kAllRules) {
          auto rewrites = apply_rule(rule, tree, cc.catalog, &g);
          if (rewrites.empty()) continue;
          auto& bucket = pairs[rule];
          const auto& pick = rewrites[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(rewrites.size()) - 1))];
          if (bucket.size() < want) bucket.push_back({tree, pick, &cc.catalog});
          if (rng.chance(0.3)) next.push_back(pick);
        }
      }
      frontier = std::move(next);
    }
  }
  return pairs;
}

}  // namespace

TEST(RewriteNode, SelectCascadeBothWays) {
  Predicate p{"cid", Comparator::Gt, Value{std::int64_t{1}}}, q{"city", Comparator::Eq, Value{std::string("Pune")}};
  auto leaf = PlanNode::call("ws_src");
  auto merged = PlanNode::select({p, q}, leaf);
  auto split = rewrite_node(Rule::SelectCascade, merged, cat1());
  ASSERT_EQ(split.size(), 1u);
  EXPECT_EQ(split[0], PlanNode::select({p}, PlanNode::select({q}, leaf)));
  auto back = rewrite_node(Rule::SelectCascade, split[0], cat1());
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], merged);
}

TEST(RewriteNode, SelectCommute) {
  Predicate p{"cid", Comparator::Gt, Value{std::int64_t{1}}}, q{"cid", Comparator::Lt, Value{std::int64_t{4}}};
  auto leaf = PlanNode::call("ws_src");
  auto r = rewrite_node(Rule::SelectCommute, PlanNode::select({p}, PlanNode::select({q}, leaf)), cat1());
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0], PlanNode::select({q}, PlanNode::select({p}, leaf)));
}

TEST(RewriteNode, JoinCommuteRespectsPrecedenceInContext) {
  auto j = PlanNode::join(PlanNode::call("ws_src"), PlanNode::call("ws_credit"));
  EXPECT_EQ(rewrite_node(Rule::JoinCommute, j, cat1()).size(), 1u);
  // The swapped tree invokes credit before its input exists.
  auto g = compose({"ws_src", "ws_credit"}, cat1());
  EXPECT_TRUE(apply_rule(Rule::JoinCommute, PlanNode::project({"cid"}, j), cat1(), &g).empty());
}

TEST(RewriteNode, SelectJoinDistribute) {
  Predicate p{"score", Comparator::Gt, Value{std::int64_t{600}}};
  auto j = PlanNode::join(PlanNode::call("ws_src"), PlanNode::call("ws_credit"));
  auto tree = PlanNode::project({"cid", "score"}, PlanNode::select({p}, j));
  auto out = apply_rule(Rule::SelectJoinDistribute, tree, cat1());
  // Only the right side produces score.
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].child().right().kind, PlanNode::Kind::Select);
  EXPECT_TRUE(multiset_equal(run(tree, cat1()), run(out[0], cat1())));
}

TEST(RewriteNode, ProjectCascadeAndDistribute) {
  const auto& c = cat1();
  auto j = PlanNode::join(PlanNode::call("ws_src"), PlanNode::call("ws_credit"));
  auto nested = PlanNode::project({"score"}, PlanNode::project({"cid", "city", "score"}, j));
  auto flat = apply_rule(Rule::ProjectCascade, nested, c);
  ASSERT_EQ(flat.size(), 1u);
  EXPECT_EQ(flat[0], PlanNode::project({"score"}, j));
  auto dist = apply_rule(Rule::ProjectJoinDistribute, PlanNode::project({"score"}, j), c);
  ASSERT_EQ(dist.size(), 1u);
  // city is dropped from the left side; cid stays for the credit call.
  EXPECT_EQ(dist[0].child().left(), PlanNode::project({"cid"}, PlanNode::call("ws_src")));
  EXPECT_TRUE(multiset_equal(run(dist[0], c), run(PlanNode::project({"score"}, j), c)));
}

TEST(RuleSoundness, HundredApplicationsPerRulePreserveOutput) {
  auto cases = wsms::testing::corpus(200, 4242);
  for (auto& cc : wsms::testing::independent_corpus(100, 4242)) cases.push_back(std::move(cc));
  const auto pairs = collect_pairs(cases, 100);
  for (auto rule : kAllRules) {
    auto it = pairs.find(rule);
    ASSERT_NE(it, pairs.end()) << to_string(rule);
    EXPECT_EQ(it->second.size(), 100u) << to_string(rule);
    for (const auto& p : it->second) {
      EXPECT_NE(serialize(p.before), serialize(p.after));
      EXPECT_TRUE(multiset_equal(run(p.before, *p.catalog), run(p.after, *p.catalog)))
          << to_string(rule) << "\n" << serialize(p.before) << "\n" << serialize(p.after);
    }
  }
}
