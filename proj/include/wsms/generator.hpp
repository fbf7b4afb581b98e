#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "wsms/catalog.hpp"
#include "wsms/costmodel.hpp"
#include "wsms/relation.hpp"
#include "wsms/sqlfront.hpp"

namespace wsms {

/// Shape of generated instances.
enum class Topology {
  Dag,            // one source, data dependencies plus random explicit edges
  Unconstrained,  // one source everything reads from; no other precedence
  Independent,    // sources only; the service graph has no edges at all
};

struct GeneratorOptions {
  std::size_t min_services = 3;
  std::size_t max_services = 7;
  Topology topology = Topology::Dag;
  double edge_probability = 0.3;
  double competitor_probability = 0.2;
  std::int64_t key_domain = 8;  // integer keys are drawn from [0, key_domain)
};

struct GeneratedInstance {
  Catalog catalog;
  std::string query;
};

/// Thin wrapper over mt19937_64 with explicit mappings, so instances do not
/// depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  bool chance(double p) { return unit() < p; }
  double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }

  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(integer(0, static_cast<std::int64_t>(v.size()) - 1))];
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(integer(0, i - 1))]);
  }

 private:
  std::mt19937_64 engine_;
};

inline const ServiceProfile kP0{2, 1, 0.01, 0.02, 100, 0.005, 30};

namespace detail {

inline const std::vector<std::string> kWords{"red", "green", "blue", "amber"};

inline ServiceProfile scaled_profile(Rng& rng) {
  ServiceProfile p = kP0;
  for (double* f : {&p.initiate_client, &p.initiate_server, &p.packing, &p.unpacking, &p.sending, &p.serviceexec}) {
    *f *= rng.uniform(0.5, 2.0);
  }
  return p;
}

inline Value random_value(Rng& rng, const std::string& attr, std::int64_t domain) {
  if (attr.front() == 'k') return rng.integer(0, domain - 1);
  return rng.pick(kWords);
}

inline std::size_t realized_count(Rng& rng, double sigma) {
  const double whole = std::floor(sigma);
  return static_cast<std::size_t>(whole) + (rng.chance(sigma - whole) ? 1 : 0);
}

}  // namespace detail

/// Random catalog plus a query over every capability in it. Service i is
/// `s<i>` with capability `c<i>`, outputs key `k<i>` (integer) and label
/// `v<i>` (string); a non-source consumes one earlier key. Selectivity of a
/// dependent service is log-uniform in [0.1, 2] (in [0.1, 0.95] without
/// explicit edges); a source's selectivity is its row count.
inline GeneratedInstance generate_instance(std::uint64_t seed, const GeneratorOptions& opt = {}) {
  Rng rng(seed);
  GeneratedInstance inst;
  Catalog& c = inst.catalog;
  const auto n = static_cast<std::size_t>(
      rng.integer(static_cast<std::int64_t>(opt.min_services), static_cast<std::int64_t>(opt.max_services)));
  const std::vector<double> widths{4, 8, 16};
  const std::int64_t domain = opt.key_domain;

  auto make_service = [&](std::size_t i, const std::string& id) {
    ServiceSpec ws;
    ws.id = id;
    ws.capability = "c" + std::to_string(i);
    ws.outputs = {"k" + std::to_string(i), "v" + std::to_string(i)};
    ws.profile = detail::scaled_profile(rng);
    const bool source = i == 0 || opt.topology == Topology::Independent;
    if (source) {
      if (opt.topology == Topology::Independent) {
        ws.selectivity = rng.uniform(0.1, 0.95);
      } else {
        ws.selectivity = static_cast<double>(rng.integer(2, 6));
      }
    } else {
      std::size_t from = 0;
      if (opt.topology == Topology::Dag && !rng.chance(0.5)) from = static_cast<std::size_t>(rng.integer(0, i - 1));
      ws.inputs = {"k" + std::to_string(from)};
      ws.selectivity = opt.topology == Topology::Dag ? rng.log_uniform(0.1, 2.0) : rng.log_uniform(0.1, 0.95);
    }
    std::vector<std::string> cols = ws.inputs;
    cols.insert(cols.end(), ws.outputs.begin(), ws.outputs.end());
    ws.dataset.schema = cols;
    auto add_row = [&](std::optional<Value> input) {
      Row row;
      if (input) row.push_back(*input);
      for (const auto& a : ws.outputs) row.push_back(detail::random_value(rng, a, domain));
      ws.dataset.rows.push_back(std::move(row));
    };
    if (ws.inputs.empty()) {
      const std::size_t rows = opt.topology == Topology::Independent ? detail::realized_count(rng, ws.selectivity)
                                                                     : static_cast<std::size_t>(ws.selectivity);
      for (std::size_t r = 0; r < rows; ++r) add_row(std::nullopt);
    } else {
      for (std::int64_t v = 0; v < domain; ++v) {
        const std::size_t rows = detail::realized_count(rng, ws.selectivity);
        for (std::size_t r = 0; r < rows; ++r) add_row(Value{v});
      }
    }
    return ws;
  };

  std::vector<std::string> attrs;
  for (std::size_t i = 0; i < n; ++i) {
    for (const char* prefix : {"k", "v"}) {
      const std::string a = prefix + std::to_string(i);
      c.attr_widths[a] = rng.pick(widths);
      attrs.push_back(a);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    ServiceSpec ws = make_service(i, "s" + std::to_string(i));
    if (rng.chance(opt.competitor_probability)) {
      ServiceSpec alt = ws;
      alt.id += "b";
      alt.profile = detail::scaled_profile(rng);
      c.services.emplace(alt.id, std::move(alt));
    }
    c.services.emplace(ws.id, std::move(ws));
  }
  for (auto& [id, ws] : c.services) {
    ws.avg_callsize = c.width_sum(ws.inputs) + 64;
    ws.avg_resultsize = ws.selectivity * c.width_sum(ws.outputs);
  }
  if (opt.topology == Topology::Dag) {
    for (std::size_t i = 1; i < n; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (rng.chance(opt.edge_probability)) c.edges.emplace("s" + std::to_string(j), "s" + std::to_string(i));
      }
    }
  }

  // Query over every capability, FROM order shuffled.
  QueryAst ast;
  for (std::size_t i = 0; i < n; ++i) ast.sources.push_back("c" + std::to_string(i));
  rng.shuffle(ast.sources);
  if (rng.chance(0.25)) {
    ast.star = true;
  } else {
    auto pool = attrs;
    rng.shuffle(pool);
    pool.resize(static_cast<std::size_t>(rng.integer(1, 3)));
    ast.projection = pool;
  }
  const std::vector<Comparator> int_ops{Comparator::Eq, Comparator::Lt, Comparator::Gt,
                                        Comparator::Le, Comparator::Ge, Comparator::Ne};
  const auto npred = rng.integer(0, 2);
  for (std::int64_t k = 0; k < npred; ++k) {
    Predicate p;
    p.lhs = rng.pick(attrs);
    if (p.lhs.front() == 'k') {
      p.op = rng.pick(int_ops);
      p.rhs = Value{rng.integer(0, domain - 1)};
    } else {
      p.op = rng.chance(0.5) ? Comparator::Eq : Comparator::Ne;
      p.rhs = Value{rng.pick(detail::kWords)};
    }
    ast.predicates.push_back(p);
    if (rng.chance(0.5)) c.predicate_selectivities[{p.lhs, p.op}] = rng.uniform(0.05, 1.0);
  }
  if (n >= 2 && rng.chance(0.2)) {
    const auto a = rng.integer(0, static_cast<std::int64_t>(n) - 1);
    auto b = rng.integer(0, static_cast<std::int64_t>(n) - 2);
    if (b >= a) ++b;
    ast.predicates.push_back({"k" + std::to_string(a), Comparator::Eq, AttrRef{"k" + std::to_string(b)}});
  }
  inst.query = render(ast);
  return inst;
}

/// Random query AST over a fixed vocabulary, for parser round trips.
inline QueryAst random_ast(Rng& rng) {
  const std::vector<std::string> names{"a", "b1", "cid", "score", "zip_code", "x_y", "Customer", "t9"};
  const std::vector<Comparator> ops{Comparator::Eq, Comparator::Lt, Comparator::Gt,
                                    Comparator::Le, Comparator::Ge, Comparator::Ne};
  const std::vector<std::string> strings{"", "Pune", "it's", "a b", "''", "x,y", "SELECT"};
  QueryAst ast;
  if (rng.chance(0.3)) {
    ast.star = true;
  } else {
    const auto k = rng.integer(1, 4);
    for (std::int64_t i = 0; i < k; ++i) ast.projection.push_back(rng.pick(names));
  }
  const auto s = rng.integer(1, 3);
  for (std::int64_t i = 0; i < s; ++i) ast.sources.push_back(rng.pick(names));
  const auto np = rng.integer(0, 3);
  for (std::int64_t i = 0; i < np; ++i) {
    Predicate p;
    p.lhs = rng.pick(names);
    p.op = rng.pick(ops);
    switch (rng.integer(0, 2)) {
      case 0: p.rhs = AttrRef{rng.pick(names)}; break;
      case 1: p.rhs = Value{rng.integer(-1000000, 1000000)}; break;
      default: p.rhs = Value{rng.pick(strings)}; break;
    }
    ast.predicates.push_back(p);
  }
  return ast;
}

}  // namespace wsms
