#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace wsms {

/// Service-call primitives. Times are abstract milliseconds, sizes bytes.
/// `initiate` is split per side: the client formula uses initiate_client,
/// the provider formula initiate_server.
struct ServiceProfile {
  double initiate_client = 0;
  double initiate_server = 0;
  double packing = 0;    // per byte
  double unpacking = 0;  // per byte
  double packetize = 0;  // bytes of SOAP envelope
  double sending = 0;    // per byte
  double serviceexec = 0;

  bool operator==(const ServiceProfile&) const = default;

  bool valid() const {
    for (double v : {initiate_client, initiate_server, packing, unpacking, packetize, sending,
                     serviceexec}) {
      if (!std::isfinite(v) || v < 0) return false;
    }
    return true;
  }
};

struct CallMetrics {
  double callsize = 0;
  double resultsize = 0;
};

/// Provider-side cost of one call:
/// initiate + callsize*unpacking + serviceexec + resultsize*packing
///   + (resultsize + packetize)*sending
inline double server_call_cost(const ServiceProfile& p, const CallMetrics& m) {
  return p.initiate_server + m.callsize * p.unpacking + p.serviceexec + m.resultsize * p.packing +
         (m.resultsize + p.packetize) * p.sending;
}

/// Client-observed cost of one call:
/// initiate + callsize*packing + (callsize + packetize)*sending + scost
///   + resultsize*unpacking, with scost = server_call_cost(p, m).
inline double client_call_cost(const ServiceProfile& p, const CallMetrics& m) {
  return p.initiate_client + m.callsize * p.packing + (m.callsize + p.packetize) * p.sending +
         server_call_cost(p, m) + m.resultsize * p.unpacking;
}

/// One position of a service invocation order, already reduced to what the
/// pipeline cost needs.
struct CallStep {
  std::string service;
  double unit_cost = 0;    // cost of a single invocation
  double selectivity = 1;  // output tuples per input tuple
  std::vector<double> factors;  // predicate factors applied after this call

  double effective_selectivity() const {
    return std::accumulate(factors.begin(), factors.end(), selectivity, std::multiplies<>{});
  }
};

struct ServiceCost {
  std::string service;
  double input_cardinality = 0;
  double per_call_cost = 0;
  double subtotal = 0;
};

struct CostEstimate {
  double total = 0;
  std::vector<ServiceCost> per_service;
};

/// Tuple-at-a-time pipeline cost: sum_k N_k * c_k with N_1 = 1 and
/// N_{k+1} = N_k * sigma_eff(k). Local operators are free.
inline CostEstimate estimate_plan_cost(std::span<const CallStep> order) {
  CostEstimate est;
  double cardinality = 1.0;
  for (const auto& step : order) {
    const double subtotal = cardinality * step.unit_cost;
    est.per_service.push_back({step.service, cardinality, step.unit_cost, subtotal});
    est.total += subtotal;
    cardinality *= step.effective_selectivity();
  }
  return est;
}

/// Observed response statistics for one service. Sums are kept rather than
/// incremental means so the reported mean is the exact arithmetic mean.
struct ProfileEntry {
  std::size_t count = 0;
  double time_sum = 0;
  double resultsize_sum = 0;

  double mean_time() const { return count ? time_sum / static_cast<double>(count) : 0.0; }
  double mean_resultsize() const {
    return count ? resultsize_sum / static_cast<double>(count) : 0.0;
  }
};

struct ProfilerStats {
  std::map<std::string, ProfileEntry> entries;

  const ProfileEntry* find(const std::string& id) const {
    auto it = entries.find(id);
    return it == entries.end() ? nullptr : &it->second;
  }
};

inline ProfilerStats record_observation(ProfilerStats stats, const std::string& id,
                                        double measured_time, double measured_resultsize) {
  auto& e = stats.entries[id];
  ++e.count;
  e.time_sum += measured_time;
  e.resultsize_sum += measured_resultsize;
  return stats;
}

}  // namespace wsms
