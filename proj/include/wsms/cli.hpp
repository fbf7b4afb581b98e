#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "wsms/catalog.hpp"
#include "wsms/executor.hpp"
#include "wsms/generator.hpp"
#include "wsms/planner.hpp"
#include "wsms/simfabric.hpp"
#include "wsms/sqlfront.hpp"

namespace wsms::cli {

enum ExitCode : int { kOk = 0, kDomainError = 1, kEnvironmentError = 2 };

/// Raised for unreadable or unwritable files.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Runs `body`, mapping failures to exit codes and a one-line message.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kEnvironmentError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kDomainError;
  }
}

// ---------------------------------------------------------------------------
// validate

inline int cmd_validate(const std::string& catalog_path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Catalog c = parse_catalog(read_file(catalog_path));
    const auto violations = validate_catalog(c);
    for (const auto& v : violations) out << v.to_string() << "\n";
    return violations.empty() ? kOk : kDomainError;
  });
}

// ---------------------------------------------------------------------------
// plan

struct PlanOptions {
  std::string catalog;
  std::string query;
  std::string strategy = "greedy_heur";
  std::string format = "text";
};

inline Strategy require_strategy(const std::string& name) {
  if (auto s = parse_strategy(name)) return *s;
  throw Error(ErrorKind::Validation, "unknown strategy '" + name + "'");
}

inline ExecutionPlan plan_from_files(const Catalog& c, const std::string& query, const std::string& strategy) {
  const auto vq = validate_query(query, c);
  return plan_query(vq, c, require_strategy(strategy));
}

inline void print_plan(const ExecutionPlan& plan, const std::string& format, std::ostream& out) {
  if (format == "dot") {
    out << to_dot(plan.tree);
    out << fmt::format("// estimate={:.6f}\n", plan.estimate.total);
  } else {
    out << plan.to_text();
    out << fmt::format("estimate={:.6f}\n", plan.estimate.total);
  }
}

inline int cmd_plan(const PlanOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opt.format != "text" && opt.format != "dot") {
      throw Error(ErrorKind::Validation, "unknown format '" + opt.format + "'");
    }
    const Catalog c = load_catalog(read_file(opt.catalog));
    print_plan(plan_from_files(c, opt.query, opt.strategy), opt.format, out);
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// run

struct RunOptions {
  std::string catalog;
  std::string query;
  std::string strategy = "greedy_heur";
  std::uint64_t seed = 42;
  double jitter = 0.0;
  bool explain = false;
  bool trace = false;
};

inline void write_trace(std::ostream& out, const std::vector<TraceEntry>& trace) {
  out << "invocation,service,callsize,resultsize,time\n";
  for (const auto& e : trace) {
    out << fmt::format("{},{},{:.6f},{:.6f},{:.6f}\n", e.invocation, e.service, e.callsize, e.resultsize, e.time);
  }
}

inline void write_cost_report(std::ostream& out, const CostReport& r) {
  out << fmt::format("estimate={:.6f}\n", r.estimate);
  out << fmt::format("measured={:.6f}\n", r.measured);
  out << fmt::format("modeled={:.6f}\n", r.modeled);
  out << fmt::format("invocations={}\n", r.invocations);
  for (const auto& [id, u] : r.per_service) {
    out << fmt::format("service.{}.calls={}\n", id, u.calls);
    out << fmt::format("service.{}.time={:.6f}\n", id, u.time);
  }
}

inline int cmd_run(const RunOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Catalog c = load_catalog(read_file(opt.catalog));
    const auto plan = plan_from_files(c, opt.query, opt.strategy);
    SimFabric fabric(c, opt.seed, opt.jitter);
    const auto result = execute_plan(plan, c, fabric, opt.seed);
    write_csv(out, result.output);
    if (opt.explain) {
      out << "# cost\n";
      write_cost_report(out, result.report);
      write_trace(out, fabric.trace());
    } else if (opt.trace) {
      out << "# trace\n";
      write_trace(out, fabric.trace());
    }
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// bench

struct BenchOptions {
  std::optional<std::string> catalogs_dir;
  std::size_t generate = 0;
  std::uint64_t seed = 42;
  double jitter = 0.0;
  std::optional<std::string> out;
};

struct BenchRow {
  std::size_t catalog_id = 0;
  std::size_t n_services = 0;
  Strategy strategy = Strategy::Naive;
  double est_cost = 0;
  double measured_time = 0;
  double ratio_to_optimal = 1;
};

struct BenchCase {
  Catalog catalog;
  std::string query;
};

/// Seed of the i-th generated bench instance.
inline std::uint64_t instance_seed(std::uint64_t seed, std::size_t i) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(i)));
}

/// Generated bench corpus: every fifth instance has no precedence beyond
/// its single source.
inline std::vector<BenchCase> generated_corpus(std::size_t n, std::uint64_t seed) {
  std::vector<BenchCase> out;
  for (std::size_t i = 0; i < n; ++i) {
    GeneratorOptions opt;
    if (i % 5 == 0) opt.topology = Topology::Unconstrained;
    auto inst = generate_instance(instance_seed(seed, i), opt);
    out.push_back({std::move(inst.catalog), std::move(inst.query)});
  }
  return out;
}

/// `<name>.json` catalogs in name order; the query comes from `<name>.sql`
/// when present, else SELECT * over every capability.
inline std::vector<BenchCase> directory_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("'" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<BenchCase> out;
  for (const auto& f : files) {
    BenchCase bc{load_catalog(read_file(f.string())), {}};
    auto sql = f;
    sql.replace_extension(".sql");
    if (fs::exists(sql)) {
      bc.query = read_file(sql.string());
    } else {
      std::set<std::string> caps;
      for (const auto& [id, ws] : bc.catalog.services) caps.insert(ws.capability);
      QueryAst ast;
      ast.star = true;
      ast.sources.assign(caps.begin(), caps.end());
      bc.query = render(ast);
    }
    out.push_back(std::move(bc));
  }
  return out;
}

inline std::vector<BenchRow> run_bench(const std::vector<BenchCase>& corpus, std::uint64_t seed, double jitter) {
  std::vector<BenchRow> rows;
  for (std::size_t id = 0; id < corpus.size(); ++id) {
    const auto& bc = corpus[id];
    const auto vq = validate_query(bc.query, bc.catalog);
    if (vq.services.size() > kBruteForceLimit - 1) {
      throw Error(ErrorKind::SizeLimit, fmt::format("catalog {} plans {} services; the optimal strategy allows at most {}",
                                                    id, vq.services.size(), kBruteForceLimit - 1));
    }
    std::map<bool, double> optimum;  // keyed by "uses pushdown"
    for (auto strategy : kAllStrategies) {
      const auto plan = plan_query(vq, bc.catalog, strategy);
      SimFabric fabric(bc.catalog, seed, jitter);
      const auto result = execute_plan(plan, bc.catalog, fabric, seed);
      const bool pushdown = strategy == Strategy::GreedyHeur || strategy == Strategy::Optimal;
      if (!optimum.contains(pushdown)) {
        optimum[pushdown] = best_order_for_rewrite_level(vq, bc.catalog, strategy).estimate.total;
      }
      const double best = optimum[pushdown];
      BenchRow row{id, vq.services.size(), strategy, plan.estimate.total, result.report.measured,
                   best > 0 ? plan.estimate.total / best : 1.0};
      rows.push_back(row);
    }
  }
  std::sort(rows.begin(), rows.end(), [](const BenchRow& a, const BenchRow& b) {
    return std::make_pair(a.catalog_id, std::string(to_string(a.strategy))) <
           std::make_pair(b.catalog_id, std::string(to_string(b.strategy)));
  });
  return rows;
}

inline void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "catalog_id,n_services,strategy,est_cost,measured_time,ratio_to_optimal\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{:.6f},{:.6f},{:.12f}\n", r.catalog_id, r.n_services, to_string(r.strategy), r.est_cost,
                       r.measured_time, r.ratio_to_optimal);
  }
}

struct BenchSummary {
  std::size_t catalogs = 0;
  std::size_t heur_not_worse = 0;  // greedy_heur <= naive (+1e-9)
  double mean_naive_over_heur = 0;
};

inline BenchSummary summarize(const std::vector<BenchRow>& rows) {
  std::map<std::size_t, std::map<Strategy, double>> est;
  for (const auto& r : rows) est[r.catalog_id][r.strategy] = r.est_cost;
  BenchSummary s;
  double sum = 0;
  for (const auto& [id, m] : est) {
    ++s.catalogs;
    const double naive = m.at(Strategy::Naive), heur = m.at(Strategy::GreedyHeur);
    if (heur <= naive + 1e-9) ++s.heur_not_worse;
    sum += heur > 0 ? naive / heur : 1.0;
  }
  if (s.catalogs) s.mean_naive_over_heur = sum / static_cast<double>(s.catalogs);
  return s;
}

inline int cmd_bench(const BenchOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opt.catalogs_dir.has_value() == (opt.generate > 0)) {
      throw Error(ErrorKind::Validation, "give exactly one of --catalogs or --generate");
    }
    const auto corpus = opt.catalogs_dir ? directory_corpus(*opt.catalogs_dir) : generated_corpus(opt.generate, opt.seed);
    const auto rows = run_bench(corpus, opt.seed, opt.jitter);
    if (opt.out) {
      std::ofstream file(*opt.out, std::ios::binary);
      if (!file) throw IoError("cannot write '" + *opt.out + "'");
      write_bench_csv(file, rows);
      if (!file) throw IoError("cannot write '" + *opt.out + "'");
    } else {
      write_bench_csv(out, rows);
    }
    const auto s = summarize(rows);
    err << fmt::format("catalogs={} greedy_heur_le_naive={} mean_naive_over_greedy_heur={:.6f}\n", s.catalogs,
                       s.heur_not_worse, s.mean_naive_over_heur);
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// Entry point

inline int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Web-service query optimizer and simulator", "wsms"};
  app.require_subcommand(1);

  std::string validate_catalog_path;
  auto* validate = app.add_subcommand("validate", "Check a catalog file");
  validate->add_option("--catalog", validate_catalog_path, "Catalog JSON")->required();

  PlanOptions plan_opt;
  auto* plan = app.add_subcommand("plan", "Print the plan chosen for a query");
  plan->add_option("--catalog", plan_opt.catalog, "Catalog JSON")->required();
  plan->add_option("--query", plan_opt.query, "Query text")->required();
  plan->add_option("--strategy", plan_opt.strategy, "naive|greedy|greedy_heur|optimal");
  plan->add_option("--format", plan_opt.format, "text|dot");

  RunOptions run_opt;
  auto* run = app.add_subcommand("run", "Plan and execute a query against the simulator");
  run->add_option("--catalog", run_opt.catalog, "Catalog JSON")->required();
  run->add_option("--query", run_opt.query, "Query text")->required();
  run->add_option("--strategy", run_opt.strategy, "naive|greedy|greedy_heur|optimal");
  run->add_option("--seed", run_opt.seed, "Simulator seed");
  run->add_option("--jitter", run_opt.jitter, "Timing jitter fraction in [0, 1)");
  run->add_flag("--explain", run_opt.explain, "Append cost report and call trace");
  run->add_flag("--trace", run_opt.trace, "Append the call trace");

  BenchOptions bench_opt;
  std::string bench_dir, bench_out;
  auto* bench = app.add_subcommand("bench", "Compare all strategies over a corpus");
  auto* dir_opt = bench->add_option("--catalogs", bench_dir, "Directory of catalog files");
  auto* gen_opt = bench->add_option("--generate", bench_opt.generate, "Number of generated catalogs");
  dir_opt->excludes(gen_opt);
  bench->add_option("--seed", bench_opt.seed, "Generator and simulator seed");
  bench->add_option("--jitter", bench_opt.jitter, "Timing jitter fraction in [0, 1)");
  auto* out_opt = bench->add_option("--out", bench_out, "Output CSV (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kEnvironmentError;
  }

  if (*validate) return cmd_validate(validate_catalog_path, out, err);
  if (*plan) return cmd_plan(plan_opt, out, err);
  if (*run) return cmd_run(run_opt, out, err);
  if (dir_opt->count()) bench_opt.catalogs_dir = bench_dir;
  if (out_opt->count()) bench_opt.out = bench_out;
  return cmd_bench(bench_opt, out, err);
}

}  // namespace wsms::cli
