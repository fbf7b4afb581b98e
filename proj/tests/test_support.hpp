#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "wsms/cli.hpp"
#include "wsms/wsms.hpp"

namespace wsms::testing {

inline std::string sample_path(const std::string& name) { return std::string(WSMS_SAMPLES_DIR) + "/" + name; }

inline const Catalog& cat1() {
  static const Catalog c = load_catalog(cli::read_file(sample_path("cat1.json")));
  return c;
}

inline const ServiceProfile kProfile0{2, 1, 0.01, 0.02, 100, 0.005, 30};

/// Minimal service with P0 and 8-byte attributes registered in `c`.
inline ServiceSpec& add_service(Catalog& c, const std::string& id, std::vector<std::string> inputs,
                                std::vector<std::string> outputs, double sigma = 1.0) {
  ServiceSpec ws;
  ws.id = id;
  ws.capability = id;
  ws.inputs = std::move(inputs);
  ws.outputs = std::move(outputs);
  ws.selectivity = sigma;
  ws.profile = kProfile0;
  ws.avg_callsize = 64;
  ws.avg_resultsize = 8;
  for (const auto& a : ws.inputs) c.attr_widths.emplace(a, 8);
  for (const auto& a : ws.outputs) c.attr_widths.emplace(a, 8);
  ws.dataset.schema = ws.inputs;
  ws.dataset.schema.insert(ws.dataset.schema.end(), ws.outputs.begin(), ws.outputs.end());
  return c.services[id] = std::move(ws);
}

/// The bench corpus (seed 42, 200 instances) plus validated queries.
struct CorpusCase {
  std::size_t id;
  Catalog catalog;
  std::string query;
  ValidatedQuery vq;
};

inline std::vector<CorpusCase> corpus(std::size_t n = 200, std::uint64_t seed = 42) {
  std::vector<CorpusCase> out;
  auto raw = cli::generated_corpus(n, seed);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto vq = validate_query(raw[i].query, raw[i].catalog);
    out.push_back({i, std::move(raw[i].catalog), std::move(raw[i].query), std::move(vq)});
  }
  return out;
}

/// Instances made only of sources, so every join may be commuted.
inline std::vector<CorpusCase> independent_corpus(std::size_t n, std::uint64_t seed) {
  std::vector<CorpusCase> out;
  for (std::size_t i = 0; i < n; ++i) {
    GeneratorOptions opt;
    opt.topology = Topology::Independent;
    auto inst = generate_instance(cli::instance_seed(seed, i), opt);
    auto vq = validate_query(inst.query, inst.catalog);
    out.push_back({i, std::move(inst.catalog), std::move(inst.query), std::move(vq)});
  }
  return out;
}

/// Pipeline cost by the recursive form c_1 + sigma_1 * (c_2 + sigma_2 * (...)),
/// written independently of estimate_plan_cost.
inline double horner_cost(const std::vector<double>& costs, const std::vector<double>& sigmas) {
  double acc = 0;
  for (std::size_t i = costs.size(); i-- > 0;) acc = costs[i] + sigmas[i] * acc;
  return acc;
}

/// Every permutation of `nodes` that respects `edges`, via next_permutation.
inline std::vector<std::vector<std::string>> feasible_orders(const ServiceGraph& g) {
  std::vector<std::vector<std::string>> out;
  auto perm = g.nodes;
  std::sort(perm.begin(), perm.end());
  do {
    bool ok = true;
    for (const auto& [from, to] : g.edges) {
      auto pf = std::find(perm.begin(), perm.end(), from), pt = std::find(perm.begin(), perm.end(), to);
      if (pf > pt) ok = false;
    }
    if (ok) out.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

}  // namespace wsms::testing
