#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wsms/costmodel.hpp"
#include "wsms/error.hpp"
#include "wsms/relation.hpp"

namespace wsms {

/// One callable service operation: a node of the service graph.
struct ServiceSpec {
  std::string id;
  std::string capability;
  std::vector<std::string> inputs;   // empty for source services
  std::vector<std::string> outputs;
  double selectivity = 1.0;          // expected output tuples per input tuple
  ServiceProfile profile;
  double avg_callsize = 0;
  double avg_resultsize = 0;
  Relation dataset;                  // rows served by the simulator

  bool is_source() const { return inputs.empty(); }

  bool produces(const std::string& attr) const {
    return std::find(outputs.begin(), outputs.end(), attr) != outputs.end();
  }
  bool consumes(const std::string& attr) const {
    return std::find(inputs.begin(), inputs.end(), attr) != inputs.end();
  }
};

using Edge = std::pair<std::string, std::string>;

struct Catalog {
  std::map<std::string, ServiceSpec> services;
  std::set<Edge> edges;  // explicit precedence edges (producer, consumer)
  std::map<std::string, double> attr_widths;
  std::map<std::pair<std::string, Comparator>, double> predicate_selectivities;

  static constexpr double kDefaultPredicateFactor = 0.5;

  const ServiceSpec& service(const std::string& id) const {
    auto it = services.find(id);
    if (it == services.end()) throw Error(ErrorKind::UnknownService, id);
    return it->second;
  }

  double width(const std::string& attr) const {
    auto it = attr_widths.find(attr);
    return it == attr_widths.end() ? 0.0 : it->second;
  }

  double width_sum(std::span<const std::string> attrs) const {
    double sum = 0;
    for (const auto& a : attrs) sum += width(a);
    return sum;
  }

  double predicate_factor(const Predicate& p) const {
    auto it = predicate_selectivities.find({p.lhs, p.op});
    return it == predicate_selectivities.end() ? kDefaultPredicateFactor : it->second;
  }
};

/// Per-invocation cost of a service from its declared profile and sizes.
inline double per_tuple_cost(const ServiceSpec& ws) {
  return client_call_cost(ws.profile, {ws.avg_callsize, ws.avg_resultsize});
}

// ---------------------------------------------------------------------------
// Graph helpers

/// Nodes that lie on a cycle, or between cycles, of the given graph.
/// Empty iff the graph is acyclic.
inline std::set<std::string> cycle_members(const std::set<std::string>& nodes,
                                           const std::set<Edge>& edges) {
  std::set<std::string> alive = nodes;
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto it = alive.begin(); it != alive.end();) {
      bool has_in = false, has_out = false;
      for (const auto& [from, to] : edges) {
        if (!alive.contains(from) || !alive.contains(to)) continue;
        if (to == *it) has_in = true;
        if (from == *it) has_out = true;
      }
      if (!has_in || !has_out) {
        it = alive.erase(it);
        changed = true;
      } else {
        ++it;
      }
    }
  }
  return alive;
}

inline std::string brace_list(const std::set<std::string>& names) {
  std::string out = "{";
  for (const auto& n : names) out += (out.size() > 1 ? ", " : "") + n;
  return out + "}";
}

/// Selected services plus their induced precedence edges.
struct ServiceGraph {
  std::vector<std::string> nodes;  // sorted
  std::set<Edge> edges;

  bool contains(const std::string& id) const {
    return std::binary_search(nodes.begin(), nodes.end(), id);
  }

  std::vector<std::string> predecessors(const std::string& id) const {
    std::vector<std::string> out;
    for (const auto& [from, to] : edges) {
      if (to == id) out.push_back(from);
    }
    return out;
  }

  /// True iff `order` lists every node exactly once and respects every edge.
  bool is_linear_extension(std::span<const std::string> order) const {
    if (order.size() != nodes.size()) return false;
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (!contains(order[i]) || !pos.emplace(order[i], i).second) return false;
    }
    return std::all_of(edges.begin(), edges.end(),
                       [&](const Edge& e) { return pos.at(e.first) < pos.at(e.second); });
  }

  /// Kahn peeling, smallest id first.
  std::vector<std::string> lexicographic_topological_order() const {
    std::map<std::string, int> indegree;
    for (const auto& n : nodes) indegree[n] = 0;
    for (const auto& e : edges) ++indegree[e.second];
    std::set<std::string> ready;
    for (const auto& [n, d] : indegree) {
      if (d == 0) ready.insert(n);
    }
    std::vector<std::string> order;
    while (!ready.empty()) {
      std::string next = *ready.begin();
      ready.erase(ready.begin());
      order.push_back(next);
      for (const auto& [from, to] : edges) {
        if (from == next && --indegree[to] == 0) ready.insert(to);
      }
    }
    if (order.size() != nodes.size()) {
      std::set<std::string> all(nodes.begin(), nodes.end());
      throw Error(ErrorKind::Cycle, "cycle among " + brace_list(cycle_members(all, edges)));
    }
    return order;
  }
};

// ---------------------------------------------------------------------------
// Loading and validation

struct Violation {
  std::string subject;  // service id, or empty for catalog-wide rules
  std::string rule;
  std::string message;

  bool operator==(const Violation&) const = default;
  std::string to_string() const {
    return (subject.empty() ? std::string("catalog") : subject) + ": " + rule + ": " + message;
  }
};

namespace detail {

using ojson = nlohmann::ordered_json;

inline void reject_unknown_keys(const ojson& obj, std::initializer_list<const char*> allowed,
                                const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorKind::Parse, where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return key == k; })) {
      throw Error(ErrorKind::Parse, "unknown key '" + key + "' in " + where);
    }
  }
}

inline double number_field(const ojson& obj, const char* key, const std::string& where,
                           double fallback, bool required) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) throw Error(ErrorKind::Parse, "missing key '" + std::string(key) + "' in " + where);
    return fallback;
  }
  if (!it->is_number()) {
    throw Error(ErrorKind::Parse, "'" + std::string(key) + "' in " + where + " must be a number");
  }
  return it->get<double>();
}

inline std::string string_field(const ojson& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw Error(ErrorKind::Parse, "'" + std::string(key) + "' in " + where + " must be a string");
  }
  return it->get<std::string>();
}

inline std::vector<std::string> string_list(const ojson& obj, const char* key,
                                            const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return {};
  if (!it->is_array()) throw Error(ErrorKind::Parse, "'" + std::string(key) + "' in " + where + " must be an array");
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) throw Error(ErrorKind::Parse, "'" + std::string(key) + "' in " + where + " must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

inline Value json_to_value(const ojson& v, const std::string& where) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_string()) return v.get<std::string>();
  throw Error(ErrorKind::Parse, where + ": values must be integers or strings");
}

inline ojson value_to_json(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  return std::get<std::string>(v);
}

inline ServiceProfile parse_profile(const ojson& obj, const std::string& where) {
  reject_unknown_keys(obj,
                      {"initiate_client", "initiate_server", "packing", "unpacking", "packetize",
                       "sending", "serviceexec"},
                      where);
  ServiceProfile p;
  p.initiate_client = number_field(obj, "initiate_client", where, 0, false);
  p.initiate_server = number_field(obj, "initiate_server", where, 0, false);
  p.packing = number_field(obj, "packing", where, 0, false);
  p.unpacking = number_field(obj, "unpacking", where, 0, false);
  p.packetize = number_field(obj, "packetize", where, 0, false);
  p.sending = number_field(obj, "sending", where, 0, false);
  p.serviceexec = number_field(obj, "serviceexec", where, 0, false);
  return p;
}

inline Relation parse_dataset(const ojson& rows, const ServiceSpec& ws, const std::string& where) {
  if (!rows.is_array()) throw Error(ErrorKind::Parse, where + ": dataset must be an array");
  Relation r;
  if (rows.empty()) {
    r.schema = ws.inputs;
    r.schema.insert(r.schema.end(), ws.outputs.begin(), ws.outputs.end());
    return r;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::string row_where = where + " dataset row " + std::to_string(i);
    if (!row.is_object()) throw Error(ErrorKind::Parse, row_where + " must be an object");
    if (i == 0) {
      for (const auto& [key, _] : row.items()) r.schema.push_back(key);
    }
    if (row.size() != r.schema.size()) {
      throw Error(ErrorKind::Parse, row_where + " has different attributes than row 0");
    }
    Row values;
    for (const auto& attr : r.schema) {
      auto it = row.find(attr);
      if (it == row.end()) throw Error(ErrorKind::Parse, row_where + " is missing '" + attr + "'");
      values.push_back(json_to_value(*it, row_where));
    }
    r.rows.push_back(std::move(values));
  }
  return r;
}

}  // namespace detail

/// Parses catalog JSON without checking semantic invariants (see
/// validate_catalog). Throws Error(Parse) on malformed input.
inline Catalog parse_catalog(const std::string& text) {
  using detail::ojson;
  ojson root;
  try {
    root = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, e.what());
  }
  detail::reject_unknown_keys(root, {"services", "edges", "attr_widths", "predicate_selectivities"},
                              "catalog");
  Catalog c;
  if (auto it = root.find("services"); it != root.end()) {
    if (!it->is_array()) throw Error(ErrorKind::Parse, "'services' must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto& obj = (*it)[i];
      std::string where = "services[" + std::to_string(i) + "]";
      detail::reject_unknown_keys(obj,
                                  {"id", "capability", "inputs", "outputs", "selectivity",
                                   "profile", "avg_callsize", "avg_resultsize", "dataset"},
                                  where);
      ServiceSpec ws;
      ws.id = detail::string_field(obj, "id", where);
      where = "service '" + ws.id + "'";
      ws.capability = detail::string_field(obj, "capability", where);
      ws.inputs = detail::string_list(obj, "inputs", where);
      ws.outputs = detail::string_list(obj, "outputs", where);
      ws.selectivity = detail::number_field(obj, "selectivity", where, 0, true);
      if (auto p = obj.find("profile"); p != obj.end()) {
        ws.profile = detail::parse_profile(*p, where + " profile");
      }
      ws.avg_callsize = detail::number_field(obj, "avg_callsize", where, 0, false);
      ws.avg_resultsize = detail::number_field(obj, "avg_resultsize", where, 0, false);
      ws.dataset = detail::parse_dataset(obj.value("dataset", ojson::array()), ws, where);
      if (c.services.contains(ws.id)) throw Error(ErrorKind::Parse, "duplicate service id '" + ws.id + "'");
      c.services.emplace(ws.id, std::move(ws));
    }
  }
  if (auto it = root.find("edges"); it != root.end()) {
    if (!it->is_array()) throw Error(ErrorKind::Parse, "'edges' must be an array");
    for (const auto& e : *it) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string()) {
        throw Error(ErrorKind::Parse, "each edge must be [from, to]");
      }
      c.edges.emplace(e[0].get<std::string>(), e[1].get<std::string>());
    }
  }
  if (auto it = root.find("attr_widths"); it != root.end()) {
    if (!it->is_object()) throw Error(ErrorKind::Parse, "'attr_widths' must be an object");
    for (const auto& [attr, w] : it->items()) {
      if (!w.is_number()) throw Error(ErrorKind::Parse, "width of '" + attr + "' must be a number");
      c.attr_widths[attr] = w.get<double>();
    }
  }
  if (auto it = root.find("predicate_selectivities"); it != root.end()) {
    if (!it->is_object()) throw Error(ErrorKind::Parse, "'predicate_selectivities' must be an object");
    for (const auto& [key, f] : it->items()) {
      auto colon = key.rfind(':');
      auto op = colon == std::string::npos ? std::nullopt : parse_comparator(key.substr(colon + 1));
      if (!op || colon == 0) throw Error(ErrorKind::Parse, "predicate selectivity key '" + key + "' must be attr:op");
      if (!f.is_number()) throw Error(ErrorKind::Parse, "predicate selectivity '" + key + "' must be a number");
      c.predicate_selectivities[{key.substr(0, colon), *op}] = f.get<double>();
    }
  }
  return c;
}

/// Every violated invariant, ordered by (service id, rule name).
inline std::vector<Violation> validate_catalog(const Catalog& c) {
  std::vector<Violation> out;
  for (const auto& [attr, w] : c.attr_widths) {
    if (!std::isfinite(w) || w < 0) out.push_back({"", "width", "attribute '" + attr + "' has negative width"});
  }
  for (const auto& [key, f] : c.predicate_selectivities) {
    if (!(f > 0 && f <= 1)) {
      out.push_back({"", "predicate-selectivity",
                     "factor for '" + key.first + ":" + to_string(key.second) + "' is outside (0,1]"});
    }
  }
  for (const auto& [id, ws] : c.services) {
    std::set<std::string> seen;
    for (const auto& a : ws.inputs) {
      if (!seen.insert(a).second) out.push_back({id, "duplicate-attribute", "'" + a + "' listed twice"});
    }
    for (const auto& a : ws.outputs) {
      if (ws.consumes(a)) {
        out.push_back({id, "io-disjoint", "'" + a + "' is both input and output"});
      } else if (!seen.insert(a).second) {
        out.push_back({id, "duplicate-attribute", "'" + a + "' listed twice"});
      }
    }
    if (ws.outputs.empty()) out.push_back({id, "outputs", "service produces no attributes"});
    if (!(ws.selectivity > 0) || !std::isfinite(ws.selectivity)) {
      out.push_back({id, "selectivity", "selectivity must be positive"});
    }
    if (!ws.profile.valid()) out.push_back({id, "profile", "profile fields must be finite and nonnegative"});
    if (!(ws.avg_callsize >= 0) || !(ws.avg_resultsize >= 0)) {
      out.push_back({id, "sizes", "average call/result sizes must be nonnegative"});
    }
    std::set<std::string> schema(ws.dataset.schema.begin(), ws.dataset.schema.end());
    if (schema != seen) out.push_back({id, "dataset-schema", "dataset attributes differ from inputs and outputs"});
    for (const auto& a : seen) {
      if (!c.attr_widths.contains(a)) out.push_back({id, "width", "no width declared for attribute '" + a + "'"});
    }
  }
  std::set<std::string> ids;
  for (const auto& [id, _] : c.services) ids.insert(id);
  for (const auto& [from, to] : c.edges) {
    for (const auto* end : {&from, &to}) {
      if (!ids.contains(*end)) {
        out.push_back({from, "edge", "edge " + from + " -> " + to + " names unknown service '" + *end + "'"});
      }
    }
  }
  if (auto members = cycle_members(ids, c.edges); !members.empty()) {
    out.push_back({*members.begin(), "cycle", "cycle among " + brace_list(members)});
  }
  std::stable_sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) {
    return std::tie(a.subject, a.rule) < std::tie(b.subject, b.rule);
  });
  return out;
}

/// parse_catalog followed by validate_catalog; any violation is fatal.
inline Catalog load_catalog(const std::string& text) {
  Catalog c = parse_catalog(text);
  auto violations = validate_catalog(c);
  if (!violations.empty()) {
    bool cyclic = std::any_of(violations.begin(), violations.end(),
                              [](const Violation& v) { return v.rule == "cycle"; });
    std::string msg;
    for (const auto& v : violations) msg += (msg.empty() ? "" : "; ") + v.to_string();
    throw Error(cyclic ? ErrorKind::Cycle : ErrorKind::Invariant, msg);
  }
  return c;
}

/// Serializes a catalog back to the file format (2-space indented JSON).
inline std::string catalog_to_json(const Catalog& c) {
  using detail::ojson;
  ojson root = ojson::object();
  root["services"] = ojson::array();
  for (const auto& [id, ws] : c.services) {
    ojson s = ojson::object();
    s["id"] = ws.id;
    s["capability"] = ws.capability;
    s["inputs"] = ws.inputs;
    s["outputs"] = ws.outputs;
    s["selectivity"] = ws.selectivity;
    s["profile"] = {{"initiate_client", ws.profile.initiate_client},
                    {"initiate_server", ws.profile.initiate_server},
                    {"packing", ws.profile.packing},
                    {"unpacking", ws.profile.unpacking},
                    {"packetize", ws.profile.packetize},
                    {"sending", ws.profile.sending},
                    {"serviceexec", ws.profile.serviceexec}};
    s["avg_callsize"] = ws.avg_callsize;
    s["avg_resultsize"] = ws.avg_resultsize;
    s["dataset"] = ojson::array();
    for (const auto& row : ws.dataset.rows) {
      ojson r = ojson::object();
      for (std::size_t i = 0; i < row.size(); ++i) r[ws.dataset.schema[i]] = detail::value_to_json(row[i]);
      s["dataset"].push_back(std::move(r));
    }
    root["services"].push_back(std::move(s));
  }
  root["edges"] = ojson::array();
  for (const auto& [from, to] : c.edges) root["edges"].push_back({from, to});
  root["attr_widths"] = ojson::object();
  for (const auto& [a, w] : c.attr_widths) root["attr_widths"][a] = w;
  root["predicate_selectivities"] = ojson::object();
  for (const auto& [key, f] : c.predicate_selectivities) {
    root["predicate_selectivities"][key.first + ":" + to_string(key.second)] = f;
  }
  return root.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Service query algebra: Map / Select / Composite

/// Map: every service whose capability equals a requested name.
inline std::map<std::string, std::vector<const ServiceSpec*>> map_services(
    const Catalog& c, const std::set<std::string>& required_capabilities) {
  std::map<std::string, std::vector<const ServiceSpec*>> out;
  for (const auto& cap : required_capabilities) {
    auto& bucket = out[cap];
    for (const auto& [id, ws] : c.services) {
      if (ws.capability == cap) bucket.push_back(&ws);
    }
  }
  return out;
}

/// Per-call cost used by Select. Declared profiles by default; when
/// `profiled` is set, services with observations use their measured mean.
struct CostModel {
  const ProfilerStats* profiled = nullptr;

  double call_cost(const ServiceSpec& ws) const {
    if (profiled) {
      if (const auto* e = profiled->find(ws.id); e && e->count > 0) return e->mean_time();
    }
    return per_tuple_cost(ws);
  }
};

/// Select: cheapest candidate by per-call cost, ties to the smallest id.
inline const ServiceSpec& select_service(std::span<const ServiceSpec* const> candidates,
                                         const CostModel& cm = {}) {
  if (candidates.empty()) throw Error(ErrorKind::Unsatisfiable, "no candidate service");
  const ServiceSpec* best = nullptr;
  double best_cost = 0;
  for (const auto* ws : candidates) {
    const double cost = cm.call_cost(*ws);
    if (!best || cost < best_cost || (cost == best_cost && ws->id < best->id)) {
      best = ws;
      best_cost = cost;
    }
  }
  return *best;
}

/// Composite: chosen services with explicit edges restricted to them plus
/// data-dependency edges (an input produced by exactly one chosen service).
inline ServiceGraph compose(const std::set<std::string>& chosen, const Catalog& c) {
  ServiceGraph g;
  g.nodes.assign(chosen.begin(), chosen.end());
  for (const auto& id : chosen) c.service(id);
  for (const auto& e : c.edges) {
    if (chosen.contains(e.first) && chosen.contains(e.second)) g.edges.insert(e);
  }
  for (const auto& consumer : chosen) {
    for (const auto& attr : c.service(consumer).inputs) {
      std::vector<std::string> producers;
      for (const auto& p : chosen) {
        if (p != consumer && c.service(p).produces(attr)) producers.push_back(p);
      }
      if (producers.size() == 1) g.edges.emplace(producers.front(), consumer);
    }
  }
  if (auto members = cycle_members(chosen, g.edges); !members.empty()) {
    throw Error(ErrorKind::Cycle, "cycle among " + brace_list(members));
  }
  return g;
}

}  // namespace wsms
