#pragma once

// Command-line front end: gen, build, bench and recall-bound.
//
// Every command is deterministic under --seed apart from wall-time fields.
// Exit codes: 0 ok, 2 usage, 3 data or I/O, 4 internal.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "henn/bench.hpp"
#include "henn/core.hpp"
#include "henn/index.hpp"
#include "henn/io.hpp"
#include "henn/navgraph.hpp"

namespace henn::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kInternal = 4 };

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::string command;
  std::string dataset;                       // fvecs or .pts path
  std::optional<SyntheticSpec> synthetic;
  std::string metric_text = "l2";
  Metric metric = Metric::l2();
  HennParams params;
  std::string graph_text = "nsw";
  std::string mode_text;                     // empty: bench runs both modes
  std::size_t k = 10;
  std::vector<std::size_t> efs{10, 20, 50, 100, 200, 400};
  std::size_t reps = 3;
  std::size_t n_queries = 100;
  std::size_t n_starts = 20;
  double delta = 0.9;
  std::string queries_path;                  // bench: defaults next to the dataset
  std::string truth_path;
  std::string out;
  std::uint64_t seed = 42;
};

inline Metric parse_metric(const std::string& s) {
  if (s == "l2") return Metric::l2();
  if (s == "cosine") return Metric::cosine();
  if (s.rfind("lp:", 0) == 0) {
    try {
      std::size_t used = 0;
      const double p = std::stod(s.substr(3), &used);
      if (used != s.size() - 3) throw std::invalid_argument("trailing characters");
      return Metric::lp(p);
    } catch (const std::exception&) {
      throw UsageError("bad --metric '" + s + "': expected lp:<p> with p > 0");
    }
  }
  throw UsageError("bad --metric '" + s + "': expected l2, lp:<p> or cosine");
}

inline GraphKind parse_graph(const std::string& s) {
  if (s == "nsw") return GraphKind::NSW;
  if (s == "knn") return GraphKind::KNN;
  if (s == "dimred") return GraphKind::DimRedDT;
  throw UsageError("bad --graph '" + s + "': expected nsw, knn or dimred");
}

inline LayerMode parse_mode(const std::string& s) {
  if (s == "henn") return LayerMode::EpsNet;
  if (s == "baseline") return LayerMode::Random;
  throw UsageError("bad --mode '" + s + "': expected henn or baseline");
}

/// "n,d,lambda" with lambda a positive rate or the word "uniform".
inline SyntheticSpec parse_synthetic(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) parts.push_back(item);
  if (parts.size() != 3) throw UsageError("bad --synthetic '" + s + "': expected n,d,lambda");
  SyntheticSpec spec;
  try {
    const long long n = std::stoll(parts[0]);
    const long long d = std::stoll(parts[1]);
    if (n < 1) throw UsageError("--synthetic: n must be >= 1");
    if (d < 1) throw UsageError("--synthetic: d must be >= 1");
    spec.n = static_cast<std::size_t>(n);
    spec.d = static_cast<std::size_t>(d);
    if (parts[2] == "uniform") {
      spec.dist = Distribution::Uniform;
      spec.lambda = 0.0;
    } else {
      spec.dist = Distribution::Exponential;
      spec.lambda = std::stod(parts[2]);
      if (!(spec.lambda > 0.0 && std::isfinite(spec.lambda))) throw UsageError("--synthetic: lambda must be > 0");
    }
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception&) {
    throw UsageError("bad --synthetic '" + s + "': expected n,d,lambda");
  }
  return spec;
}

/// One-line summary of the resolved configuration.
inline std::string describe(const RunConfig& c) {
  std::ostringstream os;
  os << std::setprecision(10) << "command=" << c.command;
  if (c.synthetic)
    os << " synthetic=" << c.synthetic->n << ',' << c.synthetic->d << ','
       << (c.synthetic->dist == Distribution::Uniform ? std::string("uniform") : std::to_string(c.synthetic->lambda));
  else
    os << " dataset=" << c.dataset;
  const auto& p = c.params;
  os << " metric=" << c.metric.name() << " m=" << p.eps.m << " c0=" << p.eps.c0 << " ranges=" << p.eps.r_ranges
     << " phi=" << p.eps.phi << " max_trials=" << p.eps.max_trials << " graph=" << graph_kind_name(p.graph.kind)
     << " M=" << p.graph.M << " efc=" << p.graph.ef_construction << " knn_k=" << p.graph.knn_k
     << " nested=" << (p.nested ? "true" : "false") << " mode=" << (c.mode_text.empty() ? "both" : c.mode_text)
     << " k=" << c.k << " ef=";
  for (std::size_t i = 0; i < c.efs.size(); ++i) os << (i ? "," : "") << c.efs[i];
  os << " reps=" << c.reps << " queries=" << c.n_queries << " seed=" << c.seed;
  return os.str();
}

namespace detail {

inline void check_writable(const std::string& path) {
  if (path.empty()) return;
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent))
    throw IoError("output directory does not exist: " + parent.string());
}

inline void check_readable(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw IoError("cannot open " + path);
}

inline std::string dataset_prefix(const std::string& path) {
  if (ends_with(path, ".pts")) return path.substr(0, path.size() - 4);
  if (ends_with(path, ".fvecs")) return path.substr(0, path.size() - 6);
  return path;
}

struct Loaded {
  PointSet points;
  PointSet queries;
  double lambda = 0.0;
};

inline PointSet first_rows(const PointSet& ps, std::size_t rows) {
  rows = std::min(rows, ps.size());
  if (rows == ps.size()) return ps;
  return PointSet(rows, ps.dim(),
                  std::vector<float>(ps.data().begin(), ps.data().begin() + static_cast<std::ptrdiff_t>(rows * ps.dim())));
}

// Loads the base points and, when `want_queries`, the query set.
inline Loaded load_inputs(const RunConfig& c, bool want_queries) {
  Loaded l{PointSet::empty(1), PointSet::empty(1)};
  if (c.synthetic) {
    auto spec = *c.synthetic;
    spec.seed = c.seed;
    spec.n_queries = want_queries ? c.n_queries : 0;
    auto data = gen_synthetic(spec);
    l.points = std::move(data.points);
    l.queries = std::move(data.queries);
    l.lambda = spec.dist == Distribution::Exponential ? spec.lambda : 0.0;
    return l;
  }
  l.points = load_dataset(c.dataset);
  if (want_queries) {
    const std::string qpath = c.queries_path.empty() ? dataset_prefix(c.dataset) + ".query.fvecs" : c.queries_path;
    if (!std::filesystem::is_regular_file(qpath))
      throw IoError("query file " + qpath + " not found; run `henn gen` to produce queries and ground truth");
    l.queries = first_rows(load_fvecs(qpath), c.n_queries);
    if (l.queries.dim() != l.points.dim())
      throw FormatError("query dimension " + std::to_string(l.queries.dim()) + " does not match dataset dimension " +
                            std::to_string(l.points.dim()),
                        0);
  }
  return l;
}

inline std::vector<std::vector<Id>> load_truth(const RunConfig& c, std::size_t n_queries, std::size_t n_points) {
  const std::string path = c.truth_path.empty() ? dataset_prefix(c.dataset) + ".gt.ivecs" : c.truth_path;
  if (!std::filesystem::is_regular_file(path))
    throw IoError("ground truth " + path + " not found; run `henn gen` first");
  const auto rows = load_ivecs(path);
  if (rows.size() < n_queries)
    throw FormatError("ground truth has " + std::to_string(rows.size()) + " rows, need " + std::to_string(n_queries), 0);
  std::vector<std::vector<Id>> out(n_queries);
  for (std::size_t i = 0; i < n_queries; ++i) {
    if (rows[i].size() < c.k)
      throw FormatError("ground truth rows hold " + std::to_string(rows[i].size()) + " ids, need k=" + std::to_string(c.k), 0);
    for (auto v : rows[i]) {
      if (v < 0 || static_cast<std::size_t>(v) >= n_points) throw FormatError("ground truth id out of range", 0);
      out[i].push_back(static_cast<Id>(v));
    }
  }
  return out;
}

inline HennParams params_for(const RunConfig& c, LayerMode mode) {
  HennParams p = c.params;
  p.mode = mode;
  p.seed = c.seed;
  return p;
}

}  // namespace detail

/// Writes <out>.pts, <out>.query.fvecs and <out>.gt.ivecs.
inline void cmd_gen(const RunConfig& c, std::ostream& log) {
  if (!c.synthetic) throw UsageError("gen needs --synthetic n,d,lambda");
  if (c.out.empty()) throw UsageError("gen needs --out <prefix>");
  detail::check_writable(c.out + ".pts");
  const auto in = detail::load_inputs(c, true);
  const std::size_t depth = std::min(in.points.size(), std::max<std::size_t>(c.k, 100));
  std::vector<std::vector<std::int32_t>> gt;
  if (in.queries.size() > 0) {
    for (const auto& row : compute_ground_truth(in.points, in.queries, depth, c.metric))
      gt.emplace_back(row.begin(), row.end());
  }
  save_points(c.out + ".pts", in.points);
  if (in.queries.size() > 0) {
    save_fvecs(c.out + ".query.fvecs", in.queries);
    save_ivecs(c.out + ".gt.ivecs", gt);
  }
  log << "wrote " << c.out << ".pts (" << in.points.size() << "x" << in.points.dim() << "), " << in.queries.size()
      << " queries, ground truth depth " << depth << "\n";
}

/// Builds one index, serializes it to --out and prints its stats.
inline void cmd_build(const RunConfig& c, std::ostream& log) {
  if (c.out.empty()) throw UsageError("build needs --out <index path>");
  detail::check_writable(c.out);
  const auto in = detail::load_inputs(c, false);
  const auto mode = c.mode_text.empty() ? LayerMode::EpsNet : parse_mode(c.mode_text);
  const auto idx = HennIndex::build(in.points, detail::params_for(c, mode), c.metric);
  const auto bytes = idx.serialize_bytes();
  henn::detail::write_file(c.out, bytes);
  log << "mode: " << layer_mode_name(mode) << "\n";
  log << "layer_sizes:";
  for (auto s : idx.layer_sizes()) log << ' ' << s;
  log << "\ntrials:";
  for (const auto& ls : idx.stats().layers) log << ' ' << ls.trials;
  log << "\nfallback:";
  for (const auto& ls : idx.stats().layers) log << ' ' << (ls.fallback ? 1 : 0);
  log << "\nbuild_s: " << idx.stats().build_seconds << "\nbytes: " << bytes.size() << "\n";
}

/// ef sweep for one or both modes. CSV rows go to --out (appended) or `out`.
inline void cmd_bench(const RunConfig& c, std::ostream& out, std::ostream& log) {
  if (c.efs.empty()) throw UsageError("bench needs at least one --ef value");
  for (auto ef : c.efs)
    if (ef < c.k) throw UsageError("every --ef value must be >= --k");
  if (c.reps < 1) throw UsageError("--reps must be >= 1");
  detail::check_writable(c.out);
  if (!c.synthetic) {
    detail::check_readable(c.dataset);
    const std::string gt = c.truth_path.empty() ? detail::dataset_prefix(c.dataset) + ".gt.ivecs" : c.truth_path;
    if (!std::filesystem::is_regular_file(gt)) throw IoError("ground truth " + gt + " not found; run `henn gen` first");
  }
  const auto in = detail::load_inputs(c, true);
  if (in.queries.size() == 0) throw UsageError("bench needs at least one query");
  if (c.k > in.points.size()) throw UsageError("--k exceeds the number of points");
  const auto truth = c.synthetic ? compute_ground_truth(in.points, in.queries, c.k, c.metric)
                                 : detail::load_truth(c, in.queries.size(), in.points.size());

  std::vector<LayerMode> modes;
  if (c.mode_text.empty())
    modes = {LayerMode::EpsNet, LayerMode::Random};
  else
    modes = {parse_mode(c.mode_text)};

  std::ofstream file;
  std::ostream* csv = &out;
  if (!c.out.empty()) {
    const bool fresh = !std::filesystem::exists(c.out) || std::filesystem::file_size(c.out) == 0;
    file.open(c.out, std::ios::app);
    if (!file) throw IoError("cannot write " + c.out);
    csv = &file;
    if (fresh) *csv << csv_header() << "\n";
  } else {
    *csv << csv_header() << "\n";
  }
  *csv << "# " << describe(c) << "\n";

  std::vector<BenchRow> rows;
  for (auto mode : modes) {
    const auto idx = HennIndex::build(in.points, detail::params_for(c, mode), c.metric);
    const double rho = static_cast<double>(estimate_rho(idx, in.queries, c.delta, 50, c.n_starts, c.seed).rho);
    for (auto ef : c.efs) {
      auto row = run_bench(idx, in.queries, truth, c.k, ef, c.reps, c.seed);
      row.lambda = in.lambda;
      row.rho_delta = rho;
      *csv << csv_row(row) << "\n";
      rows.push_back(std::move(row));
    }
  }
  csv->flush();

  // Pareto frontier per method: rows not beaten on both recall and QPS.
  log << "frontier (recall@" << c.k << ", qps):\n";
  for (const auto& r : rows) {
    bool dominated = false;
    for (const auto& o : rows)
      if (o.method == r.method && o.recall >= r.recall && o.qps >= r.qps && (o.recall > r.recall || o.qps > r.qps))
        dominated = true;
    if (!dominated)
      log << "  " << r.method << " ef=" << r.ef << " recall=" << r.recall << " qps=" << r.qps
          << " mean_hops=" << r.mean_hops << "\n";
  }
}

/// Recall bound of each flat graph kind over the whole dataset, plus the
/// complete-graph control for small inputs.
inline void cmd_recall_bound(const RunConfig& c, std::ostream& out) {
  if (!(c.delta > 0.0 && c.delta < 1.0)) throw UsageError("--delta must be in (0, 1)");
  if (c.n_starts < 1) throw UsageError("--starts must be >= 1");
  const auto in = detail::load_inputs(c, true);
  if (in.queries.size() == 0) throw UsageError("recall-bound needs at least one query");
  PointSet ps = in.points;
  PointSet qs = in.queries;
  if (c.metric.kind == MetricKind::Cosine) {
    normalize_rows(ps);
    normalize_rows(qs);
  }
  const auto ids = all_ids(ps.size());

  struct Entry {
    std::string name;
    RecallBoundEstimate est;
  };
  std::vector<Entry> entries;
  auto measure = [&](const std::string& name, const NavGraph& g, std::uint64_t tag) {
    Rng rng = make_rng(c.seed, {henn::detail::kRhoStream, tag});
    entries.push_back({name, measure_recall_bound(g, ps, qs, c.delta, c.n_starts, c.metric, rng)});
  };
  {
    Rng rng = make_rng(c.seed, {henn::detail::kGraphStream, 0});
    GraphParams gp = c.params.graph;
    gp.kind = GraphKind::NSW;
    measure("nsw", build_nsw(ps, ids, gp, c.metric, rng), 0);
  }
  measure("knn", build_knn_graph(ps, ids, c.params.graph.knn_k, c.metric), 1);
  {
    Rng rng = make_rng(c.seed, {henn::detail::kGraphStream, 2});
    measure("dimred", build_dimred_dt(ps, ids, c.params.graph.reducer, rng), 2);
  }
  if (ps.size() <= 2048) measure("complete", build_knn_graph(ps, ids, ps.size(), c.metric), 3);

  out << "# " << describe(c) << "\n";
  out << "graph,rho,pooled_rho\n";
  for (const auto& e : entries) out << e.name << ',' << e.est.rho << ',' << e.est.pooled_rho() << "\n";
  const std::vector<std::size_t> ks{1, 2, 3, 5, 10, 15, 20, 50, 100};
  out << "k";
  for (const auto& e : entries) out << ',' << e.name;
  out << "\n" << std::setprecision(6);
  for (auto k : ks) {
    if (k > ps.size()) break;
    out << k;
    for (const auto& e : entries) out << ',' << e.est.average_hits(k);
    out << "\n";
  }
}

/// Parses argv and runs the command. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Layered epsilon-net graph index for approximate nearest neighbour search"};
  app.set_config("--config", "", "TOML-style file of flag values; flags on the command line win");
  std::string synthetic;
  std::optional<std::size_t> knn_k;
  app.add_option("command", c.command, "gen | build | bench | recall-bound")
      ->required()
      ->check(CLI::IsMember({"gen", "build", "bench", "recall-bound"}));
  app.add_option("--dataset", c.dataset, "fvecs file or .pts dump");
  app.add_option("--synthetic", synthetic, "n,d,lambda (lambda may be 'uniform')");
  app.add_option("--metric", c.metric_text, "l2 | lp:<p> | cosine");
  app.add_option("--m", c.params.eps.m, "exponential decay");
  app.add_option("--c0", c.params.eps.c0, "epsilon schedule constant");
  app.add_option("--ranges", c.params.eps.r_ranges, "verification rings per trial");
  app.add_option("--phi", c.params.eps.phi, "per-trial failure probability");
  app.add_option("--max-trials", c.params.eps.max_trials, "sampling retries before halving");
  app.add_option("--threads", c.params.eps.threads, "concurrent sampling trials");
  app.add_option("--layers", c.params.max_layers, "upper layer cap (0 = automatic)");
  app.add_option("--graph", c.graph_text, "nsw | knn | dimred");
  app.add_option("--M", c.params.graph.M, "NSW out-degree");
  app.add_option("--efc", c.params.graph.ef_construction, "NSW construction beam width");
  app.add_option("--knn-k", knn_k, "kNN graph degree");
  app.add_flag("--diversify", c.params.graph.diversify, "neighbour-diversity pruning in NSW layers");
  app.add_option("--ef", c.efs, "search beam widths")->delimiter(',');
  app.add_option("--k", c.k, "neighbours per query");
  app.add_option("--reps", c.reps, "timed repetitions per configuration");
  app.add_option("--queries", c.n_queries, "query count");
  app.add_option("--starts", c.n_starts, "greedy starts per query for the recall bound");
  app.add_option("--delta", c.delta, "recall bound confidence");
  app.add_option("--query-file", c.queries_path, "query fvecs (bench / recall-bound with --dataset)");
  app.add_option("--truth", c.truth_path, "ground-truth ivecs (bench with --dataset)");
  app.add_option("--mode", c.mode_text, "henn | baseline");
  app.add_option("--nested", c.params.nested, "sample each layer from the one below (true|false)");
  app.add_option("--seed", c.seed, "random seed");
  app.add_option("--out", c.out, "output path or prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (!c.dataset.empty() && !synthetic.empty()) throw UsageError("give exactly one of --dataset and --synthetic");
    if (c.dataset.empty() && synthetic.empty()) throw UsageError("a data source is required: --dataset or --synthetic");
    if (!synthetic.empty()) c.synthetic = parse_synthetic(synthetic);
    c.metric = parse_metric(c.metric_text);
    c.params.graph.kind = parse_graph(c.graph_text);
    if (knn_k) c.params.graph.knn_k = *knn_k;
    if (!c.mode_text.empty()) parse_mode(c.mode_text);
    if (c.k < 1) throw UsageError("--k must be >= 1");
    if (c.n_queries < 1 && c.command != "build") throw UsageError("--queries must be >= 1");
    try {
      c.params.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (!c.dataset.empty()) detail::check_readable(c.dataset);

    if (c.command == "gen") {
      cmd_gen(c, out);
    } else if (c.command == "build") {
      cmd_build(c, out);
    } else if (c.command == "bench") {
      cmd_bench(c, out, c.out.empty() ? err : out);
    } else {
      cmd_recall_bound(c, out);
    }
    return kOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << " (offset " << e.offset() << ")\n";
    return kData;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kData;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace henn::cli
