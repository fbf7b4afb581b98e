#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wsms/catalog.hpp"
#include "wsms/costmodel.hpp"
#include "wsms/relation.hpp"

namespace wsms {

/// SplitMix64 finalizer (Steele, Lea & Flood). Used as a counter-based
/// generator: the jitter of the k-th call to a service is a pure function of
/// (seed, service id, k).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double unit_interval(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

struct Invocation {
  Relation rows;  // returned output attributes only
  CallMetrics metrics;
  double time = 0;
};

struct TraceEntry {
  std::size_t invocation = 0;
  std::string service;
  double callsize = 0;
  double resultsize = 0;
  double time = 0;
};

/// Deterministic stand-in for remote providers. Answers calls from catalog
/// datasets and charges client_call_cost * (1 + u), u ~ U[-jitter, +jitter].
class SimFabric {
 public:
  static constexpr double kEnvelopeBytes = 64;

  SimFabric(const Catalog& catalog, std::uint64_t seed, double jitter = 0.0)
      : catalog_(&catalog), seed_(seed), jitter_(jitter) {
    if (!(jitter >= 0 && jitter < 1)) throw Error(ErrorKind::Validation, "jitter must be in [0, 1)");
  }

  void reset(std::uint64_t seed) {
    seed_ = seed;
    calls_per_service_.clear();
    trace_.clear();
  }

  std::uint64_t seed() const { return seed_; }
  double jitter() const { return jitter_; }
  const Catalog& catalog() const { return *catalog_; }
  const Relation& dataset(const std::string& id) const { return catalog_->service(id).dataset; }
  const std::vector<TraceEntry>& trace() const { return trace_; }

  double total_time() const {
    double sum = 0;
    for (const auto& e : trace_) sum += e.time;
    return sum;
  }

  /// Calls service `id` with `binding` (values for at least its inputs).
  /// Rows matching the binding and every pushed predicate are returned,
  /// restricted to `returned` (all outputs when unset).
  Invocation invoke(const std::string& id, const std::map<std::string, Value>& binding,
                    std::span<const Predicate> pushed = {},
                    const std::optional<std::vector<std::string>>& returned = std::nullopt) {
    const ServiceSpec& ws = catalog_->service(id);
    const Relation& data = ws.dataset;
    std::vector<std::pair<std::size_t, const Value*>> keys;
    for (const auto& in : ws.inputs) {
      auto it = binding.find(in);
      if (it == binding.end()) {
        throw Error(ErrorKind::Schema, "binding for " + id + " is missing input '" + in + "'");
      }
      keys.emplace_back(data.require(in), &it->second);
    }
    const std::vector<std::string>& cols = returned ? *returned : ws.outputs;
    std::vector<std::size_t> col_idx;
    for (const auto& a : cols) {
      if (!ws.produces(a)) throw Error(ErrorKind::Schema, id + " does not return '" + a + "'");
      col_idx.push_back(data.require(a));
    }

    Invocation result;
    result.rows.schema = cols;
    for (const auto& row : data.rows) {
      bool match = true;
      for (const auto& [idx, v] : keys) {
        if (!compare_values(row[idx], Comparator::Eq, *v)) {
          match = false;
          break;
        }
      }
      for (std::size_t i = 0; match && i < pushed.size(); ++i) match = evaluate(pushed[i], data, row);
      if (!match) continue;
      Row out;
      out.reserve(col_idx.size());
      for (auto i : col_idx) out.push_back(row[i]);
      result.rows.rows.push_back(std::move(out));
    }

    result.metrics.callsize = catalog_->width_sum(ws.inputs) + kEnvelopeBytes;
    result.metrics.resultsize = static_cast<double>(result.rows.size()) * catalog_->width_sum(cols);
    const std::size_t k = calls_per_service_[id]++;
    result.time = client_call_cost(ws.profile, result.metrics) * (1.0 + jitter_draw(id, k));
    trace_.push_back({trace_.size(), id, result.metrics.callsize, result.metrics.resultsize, result.time});
    return result;
  }

  /// The u in [-jitter, +jitter] applied to the k-th call of `id`.
  double jitter_draw(const std::string& id, std::size_t k) const {
    if (jitter_ == 0) return 0.0;
    std::uint64_t x = splitmix64(seed_);
    x = splitmix64(x ^ fnv1a64(id));
    x = splitmix64(x ^ static_cast<std::uint64_t>(k));
    return (2.0 * unit_interval(x) - 1.0) * jitter_;
  }

 private:
  const Catalog* catalog_;
  std::uint64_t seed_;
  double jitter_;
  std::map<std::string, std::size_t> calls_per_service_;
  std::vector<TraceEntry> trace_;
};

}  // namespace wsms
