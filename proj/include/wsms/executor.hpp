#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "wsms/catalog.hpp"
#include "wsms/costmodel.hpp"
#include "wsms/plan.hpp"
#include "wsms/relation.hpp"
#include "wsms/simfabric.hpp"
#include "wsms/sqlfront.hpp"

namespace wsms {

// ---------------------------------------------------------------------------
// Local relational operators (multiset semantics)

inline Relation eval_select(const Relation& r, const Predicate& p) {
  for (const auto& a : p.attributes()) r.require(a);
  Relation out{r.schema, {}};
  for (const auto& row : r.rows) {
    if (evaluate(p, r, row)) out.rows.push_back(row);
  }
  return out;
}

inline Relation eval_select(const Relation& r, const std::vector<Predicate>& conjuncts) {
  Relation out = r;
  for (const auto& p : conjuncts) out = eval_select(out, p);
  return out;
}

/// Keeps `attrs` in the given order; duplicates are not removed.
inline Relation eval_project(const Relation& r, const std::vector<std::string>& attrs) {
  return reorder_columns(r, attrs);
}

namespace detail {

struct ValueHash {
  std::size_t operator()(const Value& v) const { return std::hash<Value>{}(v); }
};

struct KeyHash {
  std::size_t operator()(const Row& key) const {
    std::size_t h = 0;
    for (const auto& v : key) h = h * 1000003u ^ std::hash<Value>{}(v);
    return h;
  }
};

/// Raises TypeMismatch if two key tuples hold values of different types.
inline void check_key_types(const Row& a, const Row& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].index() != b[i].index()) compare_values(a[i], Comparator::Eq, b[i]);
  }
}

}  // namespace detail

/// Natural join of `l` and `r` on their shared attributes, further
/// restricted by `conditions`. Attribute equalities across the inputs are
/// hash-join keys (build on the smaller input, left on ties); other
/// conditions are checked per pair. Output schema: l ++ (r minus shared).
inline Relation eval_join(const Relation& l, const Relation& r, const std::vector<Predicate>& conditions = {}) {
  std::vector<std::pair<std::size_t, std::size_t>> keys;  // (left index, right index)
  for (std::size_t i = 0; i < l.schema.size(); ++i) {
    if (auto j = r.index_of(l.schema[i])) keys.emplace_back(i, *j);
  }
  std::vector<Predicate> residual;
  for (const auto& p : conditions) {
    if (p.is_equi_join()) {
      const auto& rhs = std::get<AttrRef>(p.rhs).name;
      auto li = l.index_of(p.lhs), rj = r.index_of(rhs);
      if (!li || !rj) {
        li = l.index_of(rhs);
        rj = r.index_of(p.lhs);
      }
      if (li && rj && !r.has(l.schema[*li])) {
        keys.emplace_back(*li, *rj);
        continue;
      }
    }
    residual.push_back(p);
  }
  Relation out;
  out.schema = l.schema;
  std::vector<std::size_t> r_extra;
  for (std::size_t j = 0; j < r.schema.size(); ++j) {
    if (!l.has(r.schema[j])) {
      out.schema.push_back(r.schema[j]);
      r_extra.push_back(j);
    }
  }
  for (const auto& p : residual) {
    for (const auto& a : p.attributes()) out.require(a);
  }
  auto emit = [&](const Row& lr, const Row& rr) {
    Row row = lr;
    for (auto j : r_extra) row.push_back(rr[j]);
    for (const auto& p : residual) {
      if (!evaluate(p, out, row)) return;
    }
    out.rows.push_back(std::move(row));
  };
  auto key_of = [&](const Row& row, bool left) {
    Row key;
    key.reserve(keys.size());
    for (const auto& [i, j] : keys) key.push_back(row[left ? i : j]);
    return key;
  };

  const bool build_left = l.size() <= r.size();
  const Relation& build = build_left ? l : r;
  const Relation& probe = build_left ? r : l;
  std::unordered_map<Row, std::vector<std::size_t>, detail::KeyHash> table;
  std::optional<Row> sample_key;
  for (std::size_t i = 0; i < build.rows.size(); ++i) {
    auto key = key_of(build.rows[i], build_left);
    if (!sample_key) sample_key = key;
    table[std::move(key)].push_back(i);
  }
  // Probe in probe order; emit pairs in left-major order afterwards.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (left row, right row)
  for (std::size_t k = 0; k < probe.rows.size(); ++k) {
    auto key = key_of(probe.rows[k], !build_left);
    if (sample_key) detail::check_key_types(*sample_key, key);
    auto it = table.find(key);
    if (it == table.end()) continue;
    for (auto b : it->second) pairs.emplace_back(build_left ? b : k, build_left ? k : b);
  }
  std::sort(pairs.begin(), pairs.end());
  for (const auto& [i, j] : pairs) emit(l.rows[i], r.rows[j]);
  return out;
}

/// Plain nested-loop natural join; the reference the hash join is checked
/// against.
inline Relation nested_loop_join(const Relation& l, const Relation& r, const std::vector<Predicate>& conditions = {}) {
  Relation out;
  out.schema = l.schema;
  std::vector<std::size_t> r_extra;
  std::vector<std::pair<std::size_t, std::size_t>> shared;
  for (std::size_t j = 0; j < r.schema.size(); ++j) {
    if (auto i = l.index_of(r.schema[j])) {
      shared.emplace_back(*i, j);
    } else {
      out.schema.push_back(r.schema[j]);
      r_extra.push_back(j);
    }
  }
  for (const auto& lr : l.rows) {
    for (const auto& rr : r.rows) {
      bool match = true;
      for (const auto& [i, j] : shared) match = match && compare_values(lr[i], Comparator::Eq, rr[j]);
      if (!match) continue;
      Row row = lr;
      for (auto j : r_extra) row.push_back(rr[j]);
      for (const auto& p : conditions) match = match && evaluate(p, out, row);
      if (match) out.rows.push_back(std::move(row));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Service materialization

/// Materialized relations by plan-node id (pre-order index); each slot is
/// written once per execution.
class LocalStore {
 public:
  void put(std::size_t node, Relation r) {
    if (!slots_.emplace(node, std::move(r)).second) {
      throw Error(ErrorKind::Invariant, "node " + std::to_string(node) + " materialized twice");
    }
  }
  const Relation& get(std::size_t node) const {
    auto it = slots_.find(node);
    if (it == slots_.end()) throw Error(ErrorKind::Invariant, "node " + std::to_string(node) + " not materialized");
    return it->second;
  }
  bool contains(std::size_t node) const { return slots_.contains(node); }
  std::size_t size() const { return slots_.size(); }

 private:
  std::map<std::size_t, Relation> slots_;
};

/// Calls `ws` once per tuple of `bindings` and joins each response onto the
/// tuple that produced it. Responses reuse attributes already bound only
/// when the values agree (natural join).
inline Relation materialize_service(const ServiceSpec& ws, const Relation& bindings, SimFabric& fabric,
                                    std::span<const Predicate> pushed = {},
                                    const std::optional<std::vector<std::string>>& returned = std::nullopt) {
  for (const auto& in : ws.inputs) {
    if (!bindings.has(in)) throw Error(ErrorKind::Schema, "input '" + in + "' of " + ws.id + " is unbound");
  }
  const std::vector<std::string>& cols = returned ? *returned : ws.outputs;
  Relation out;
  out.schema = keep_columns(bindings.schema, cols);
  std::vector<std::pair<std::size_t, std::optional<std::size_t>>> placement;  // response col -> driving col
  for (std::size_t k = 0; k < cols.size(); ++k) placement.emplace_back(k, bindings.index_of(cols[k]));
  for (const auto& tuple : bindings.rows) {
    std::map<std::string, Value> binding;
    for (const auto& in : ws.inputs) binding.emplace(in, tuple[bindings.require(in)]);
    Invocation inv;
    try {
      inv = fabric.invoke(ws.id, binding, pushed, returned);
    } catch (const Error& e) {
      throw Error(e.kind(), ws.id + ": " + e.what());
    }
    for (const auto& resp : inv.rows.rows) {
      bool match = true;
      Row row = tuple;
      for (const auto& [k, driving] : placement) {
        if (driving) {
          match = match && compare_values(tuple[*driving], Comparator::Eq, resp[k]);
        } else {
          row.push_back(resp[k]);
        }
      }
      if (match) out.rows.push_back(std::move(row));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plan execution

struct ServiceUsage {
  std::size_t calls = 0;
  double time = 0;

  bool operator==(const ServiceUsage&) const = default;
};

struct CostReport {
  double estimate = 0;       // what the planner expected
  double measured = 0;       // sum of simulated call times
  double modeled = 0;        // client_call_cost at the realized call metrics
  std::size_t invocations = 0;
  std::map<std::string, ServiceUsage> per_service;

  bool operator==(const CostReport&) const = default;
};

struct ExecutionResult {
  Relation output;
  CostReport report;
  ProfilerStats profile;
};

namespace detail {

struct TreeExecutor {
  const Catalog& catalog;
  SimFabric& fabric;
  LocalStore store;
  std::size_t next_id = 0;

  Relation run(const PlanNode& n, const Relation& driving) {
    const std::size_t id = next_id++;
    Relation out;
    switch (n.kind) {
      case PlanNode::Kind::ServiceCall: {
        std::vector<Predicate> pushed;
        for (const auto& ap : n.pushed) pushed.push_back(ap.predicate);
        out = materialize_service(catalog.service(n.service), driving, fabric, pushed, n.returned);
        break;
      }
      case PlanNode::Kind::Select: out = eval_select(run(n.child(), driving), n.predicates); break;
      case PlanNode::Kind::Project:
        out = eval_project(run(n.child(), driving), keep_columns(driving.schema, n.attrs));
        break;
      case PlanNode::Kind::Join: {
        Relation lout = run(n.left(), driving);
        out = eval_select(run(n.right(), lout), n.predicates);
        break;
      }
    }
    store.put(id, out);
    return out;
  }
};

}  // namespace detail

/// Evaluates a logical plan tree against the fabric from the seed tuple.
/// The fabric is not reset; its trace grows by the calls made.
inline Relation execute_tree(const LogicalPlan& tree, const Catalog& c, SimFabric& fabric) {
  detail::TreeExecutor ex{c, fabric, {}, 0};
  return ex.run(tree, seed_relation());
}

/// Resets the fabric to `seed`, runs the plan, and reports cost. `prior`
/// profiler statistics are extended with one observation per call.
inline ExecutionResult execute_plan(const ExecutionPlan& plan, const Catalog& c, SimFabric& fabric, std::uint64_t seed,
                                    ProfilerStats prior = {}) {
  fabric.reset(seed);
  ExecutionResult result;
  result.output = execute_tree(plan.tree, c, fabric);
  result.report.estimate = plan.estimate.total;
  result.profile = std::move(prior);
  for (const auto& e : fabric.trace()) {
    result.report.measured += e.time;
    result.report.modeled += client_call_cost(c.service(e.service).profile, {e.callsize, e.resultsize});
    ++result.report.invocations;
    auto& usage = result.report.per_service[e.service];
    ++usage.calls;
    usage.time += e.time;
    result.profile = record_observation(std::move(result.profile), e.service, e.time, e.resultsize);
  }
  return result;
}

/// Ground truth: natural join of every chosen service's full dataset in
/// lexicographic topological order, then all predicates, then the
/// projection. No service is invoked.
inline Relation reference_execute(const ValidatedQuery& vq, const Catalog& c) {
  const ServiceGraph g = compose(vq.service_set(), c);
  Relation acc = seed_relation();
  for (const auto& id : g.lexicographic_topological_order()) {
    const auto& ws = c.service(id);
    std::vector<std::string> cols = ws.inputs;
    cols.insert(cols.end(), ws.outputs.begin(), ws.outputs.end());
    acc = nested_loop_join(acc, reorder_columns(ws.dataset, cols));
  }
  acc = eval_select(acc, vq.ast.predicates);
  return eval_project(acc, vq.projection);
}

inline Relation reference_execute(const ValidatedQuery& vq, const SimFabric& fabric) {
  return reference_execute(vq, fabric.catalog());
}

}  // namespace wsms
