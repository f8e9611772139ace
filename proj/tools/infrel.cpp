// infrel: metadata-informed Bayesian relational models for directed networks.
//
// Subcommands: simulate | fit | crossval | diagnose | importance.
// Every run is reproducible byte-for-byte given the same inputs and --seed;
// outputs carry no timestamps and land under --outdir with a MANIFEST.

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "infrel/checkpoint.hpp"
#include "infrel/diagnostics.hpp"
#include "infrel/evalx.hpp"
#include "infrel/genmodel.hpp"
#include "infrel/netdata.hpp"
#include "infrel/samplers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace infrel;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_fixed(double v, int digits = 4) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// MANIFEST: "<fnv1a64 hex>  <relative path>" per artifact, sorted.
void write_manifest(const fs::path& outdir) {
  std::vector<std::string> rels;
  for (auto& entry : fs::recursive_directory_iterator(outdir)) {
    if (!entry.is_regular_file()) continue;
    auto rel = fs::relative(entry.path(), outdir).generic_string();
    if (rel == "MANIFEST") continue;
    rels.push_back(rel);
  }
  std::sort(rels.begin(), rels.end());
  std::ostringstream os;
  for (const auto& rel : rels) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, fnv1a64(read_file((outdir / rel).string())));
    os << buf << "  " << rel << "\n";
  }
  write_file(outdir / "MANIFEST", os.str());
}

// ---------------------------------------------------------------------------
// Flat key=value configuration with precedence flags > file > defaults.

struct Options {
  std::string model = "infmm";
  std::string family = "binary";
  std::string edges, metadata, rules, outdir = "out";
  std::string trace, column = "K", eta_path;
  long n = 0;  // 0 = autodetect from the edge list
  long n_sim = 20;
  long f_sim = 2;
  double meta_density = 0.5;
  long iterations = 10000;
  long burn_in = 5000;
  long thinning = 1;
  long chains = 30;
  long kmax = 20;
  long kinit = 4;
  std::uint64_t seed = 42;
  long jobs = 1;
  double alpha = 1.0;
  double alpha_eta = 1.0, beta_eta = 1.0;
  double alpha_b = 1.0, beta_b = 1.0, a_b = 1.0, b_b = 1.0, sigma_b = 1.0;
  bool resample_hypers = false;
  bool random_scan = false;
  bool remap_zero_unit = false;
  long checkpoint_every = 0;
  long snapshot_every = 0;
  long holdout_fold = -1;  // fit: mark one fold as Test when >= 0
  long plant_k = 0;        // simulate: planted blocks instead of generative draw
  double separation = 0.8;
};

// Keys accepted in a config file; mirrors the long flags.
void apply_config_line(Options& o, const std::string& key, const std::string& val,
                       const std::map<std::string, bool>& flag_given) {
  if (flag_given.count(key) && flag_given.at(key)) return;  // flags win
  auto as_long = [&] { return detail::parse_long(val, "config value for " + key); };
  auto as_double = [&] { return detail::parse_double(val, "config value for " + key); };
  auto as_bool = [&] {
    if (val == "true" || val == "1") return true;
    if (val == "false" || val == "0") return false;
    throw DataError("config value for " + key + " must be true/false");
  };
  if (key == "model") o.model = val;
  else if (key == "family") o.family = val;
  else if (key == "edges") o.edges = val;
  else if (key == "metadata") o.metadata = val;
  else if (key == "rules") o.rules = val;
  else if (key == "outdir") o.outdir = val;
  else if (key == "trace") o.trace = val;
  else if (key == "column") o.column = val;
  else if (key == "eta") o.eta_path = val;
  else if (key == "n") o.n = as_long();
  else if (key == "sim_n") o.n_sim = as_long();
  else if (key == "sim_f") o.f_sim = as_long();
  else if (key == "meta_density") o.meta_density = as_double();
  else if (key == "iterations") o.iterations = as_long();
  else if (key == "burn_in") o.burn_in = as_long();
  else if (key == "thinning") o.thinning = as_long();
  else if (key == "chains") o.chains = as_long();
  else if (key == "kmax") o.kmax = as_long();
  else if (key == "kinit") o.kinit = as_long();
  else if (key == "seed") o.seed = static_cast<std::uint64_t>(as_long());
  else if (key == "jobs") o.jobs = as_long();
  else if (key == "alpha") o.alpha = as_double();
  else if (key == "alpha_eta") o.alpha_eta = as_double();
  else if (key == "beta_eta") o.beta_eta = as_double();
  else if (key == "alpha_b") o.alpha_b = as_double();
  else if (key == "beta_b") o.beta_b = as_double();
  else if (key == "a_b") o.a_b = as_double();
  else if (key == "b_b") o.b_b = as_double();
  else if (key == "sigma_b") o.sigma_b = as_double();
  else if (key == "resample_hypers") o.resample_hypers = as_bool();
  else if (key == "random_scan") o.random_scan = as_bool();
  else if (key == "remap_zero_unit") o.remap_zero_unit = as_bool();
  else if (key == "checkpoint_every") o.checkpoint_every = as_long();
  else if (key == "snapshot_every") o.snapshot_every = as_long();
  else if (key == "holdout_fold") o.holdout_fold = as_long();
  else if (key == "plant_k") o.plant_k = as_long();
  else if (key == "separation") o.separation = as_double();
  else throw DataError("unknown config key: " + key);
}

void load_config_file(Options& o, const std::string& path,
                      const std::map<std::string, bool>& flag_given) {
  std::istringstream is(read_file(path));
  std::string line;
  while (std::getline(is, line)) {
    auto body = detail::trim(detail::strip_comment(line));
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string::npos) throw DataError("config line is not key=value: " + body);
    apply_config_line(o, detail::trim(body.substr(0, eq)), detail::trim(body.substr(eq + 1)),
                      flag_given);
  }
}

std::string resolved_config(const Options& o) {
  std::ostringstream os;
  os << "a_b = " << fmt_double(o.a_b) << "\n";
  os << "alpha = " << fmt_double(o.alpha) << "\n";
  os << "alpha_b = " << fmt_double(o.alpha_b) << "\n";
  os << "alpha_eta = " << fmt_double(o.alpha_eta) << "\n";
  os << "b_b = " << fmt_double(o.b_b) << "\n";
  os << "beta_b = " << fmt_double(o.beta_b) << "\n";
  os << "beta_eta = " << fmt_double(o.beta_eta) << "\n";
  os << "burn_in = " << o.burn_in << "\n";
  os << "chains = " << o.chains << "\n";
  os << "checkpoint_every = " << o.checkpoint_every << "\n";
  os << "column = " << o.column << "\n";
  if (!o.edges.empty()) os << "edges = " << o.edges << "\n";
  if (!o.eta_path.empty()) os << "eta = " << o.eta_path << "\n";
  os << "family = " << o.family << "\n";
  os << "holdout_fold = " << o.holdout_fold << "\n";
  os << "iterations = " << o.iterations << "\n";
  os << "jobs = " << o.jobs << "\n";
  os << "kinit = " << o.kinit << "\n";
  os << "kmax = " << o.kmax << "\n";
  os << "meta_density = " << fmt_double(o.meta_density) << "\n";
  if (!o.metadata.empty()) os << "metadata = " << o.metadata << "\n";
  os << "model = " << o.model << "\n";
  os << "n = " << o.n << "\n";
  os << "plant_k = " << o.plant_k << "\n";
  os << "random_scan = " << (o.random_scan ? "true" : "false") << "\n";
  os << "remap_zero_unit = " << (o.remap_zero_unit ? "true" : "false") << "\n";
  os << "resample_hypers = " << (o.resample_hypers ? "true" : "false") << "\n";
  if (!o.rules.empty()) os << "rules = " << o.rules << "\n";
  os << "seed = " << o.seed << "\n";
  os << "separation = " << fmt_double(o.separation) << "\n";
  os << "sim_f = " << o.f_sim << "\n";
  os << "sim_n = " << o.n_sim << "\n";
  os << "snapshot_every = " << o.snapshot_every << "\n";
  os << "thinning = " << o.thinning << "\n";
  if (!o.trace.empty()) os << "trace = " << o.trace << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Model resolution: the iMMM/LFRM baselines are frozen-eta reductions.

struct ResolvedModel {
  Model model;
  Family family;
  bool eta_frozen = false;
  bool drop_metadata = false;
};

ResolvedModel resolve_model(const std::string& model_name, const std::string& family_name) {
  LinkKind kind = link_kind_from_string(family_name);
  ResolvedModel r{Model::InfMM, Family::BernoulliBeta, false, false};
  std::string base = model_name;
  if (model_name == "immm") {
    base = "infmm";
    r.eta_frozen = true;
    r.drop_metadata = true;
  } else if (model_name == "lfrm") {
    base = "inflf";
    r.eta_frozen = true;
    r.drop_metadata = true;
  }
  r.model = model_from_string(base);
  r.family = default_family(kind, r.model == Model::InfLF);
  if (r.model == Model::InfLF && kind == LinkKind::Unit)
    throw CLI::ValidationError("--family", "unit link data is not supported for " + model_name);
  return r;
}

LinkKind kind_of(const std::string& family_name) { return link_kind_from_string(family_name); }

// Entity count: an "n=<count>" token in a header comment wins (the writer
// emits one; zero-degree entities never appear as records), otherwise the
// largest index + 1.
long detect_n(const std::string& edge_text) {
  long mx = -1;
  std::istringstream is(edge_text);
  std::string line;
  while (std::getline(is, line)) {
    auto comment_pos = line.find('#');
    if (comment_pos != std::string::npos) {
      auto npos = line.find("n=", comment_pos);
      if (npos != std::string::npos) {
        long n = 0;
        if (std::sscanf(line.c_str() + npos, "n=%ld", &n) == 1 && n > 0) return n;
      }
    }
    auto body = detail::trim(detail::strip_comment(line));
    if (body.empty()) continue;
    auto tok = detail::split_ws(body);
    if (tok.size() != 3) throw DataError("expected 'src dst value': " + body);
    mx = std::max(mx, detail::parse_long(tok[0], "src"));
    mx = std::max(mx, detail::parse_long(tok[1], "dst"));
  }
  if (mx < 0) throw DataError("edge list has no records; pass --n explicitly");
  return mx + 1;
}

struct LoadedInputs {
  NetworkData net;
  MetadataMatrix meta;
};

LoadedInputs load_inputs(const Options& o, const ResolvedModel& rm) {
  if (o.edges.empty()) throw DataError("--edges is required");
  std::string text = read_file(o.edges);
  long n = o.n > 0 ? o.n : detect_n(text);
  ParseOptions popts;
  popts.remap_zero_unit = o.remap_zero_unit;
  LoadedInputs in;
  in.net = parse_edge_list(text, static_cast<int>(n), kind_of(o.family), popts);

  if (rm.drop_metadata) {
    if (!o.metadata.empty())
      std::cerr << "warning: metadata ignored under " << o.model
                << " (metadata-free baseline)\n";
    // single always-on attribute carrying the frozen concentration
    in.meta.phi = Grid<std::uint8_t>(in.net.n, 1, 1);
    in.meta.attribute_names = {"_alpha"};
    return in;
  }
  if (o.metadata.empty()) {
    in.meta = empty_metadata(in.net.n);
    return in;
  }
  std::string meta_text = read_file(o.metadata);
  if (!o.rules.empty()) {
    auto raw = read_attribute_csv(meta_text, in.net.n);
    auto rules = parse_binarize_rules(read_file(o.rules));
    in.meta = binarize_attributes(raw, rules);
  } else {
    in.meta = read_binary_metadata_csv(meta_text, in.net.n);
  }
  return in;
}

RunConfig run_config(const Options& o, const ResolvedModel& rm) {
  RunConfig cfg;
  cfg.iterations = o.iterations;
  cfg.burn_in = o.burn_in;
  cfg.thinning = o.thinning;
  cfg.chains = static_cast<int>(o.chains);
  cfg.k_max = static_cast<int>(o.kmax);
  cfg.k_init = static_cast<int>(o.kinit);
  cfg.seed = o.seed;
  cfg.eta_frozen = rm.eta_frozen;
  cfg.alpha = o.alpha;
  cfg.resample_hypers = o.resample_hypers;
  cfg.random_scan = o.random_scan;
  cfg.eta_hyper = {o.alpha_eta, o.beta_eta};
  cfg.b_hyper = {o.alpha_b, o.beta_b, o.a_b, o.b_b, o.sigma_b};
  cfg.checkpoint_every = o.checkpoint_every;
  if (cfg.iterations <= 0 || cfg.burn_in < 0 || cfg.burn_in >= cfg.iterations)
    throw CLI::ValidationError("--iterations", "need iterations > burn_in >= 0");
  return cfg;
}

// ---------------------------------------------------------------------------
// CSV writers.

std::string trace_csv(const std::vector<TraceRecord>& trace) {
  std::ostringstream os;
  os << "iteration,K,log_joint,auc,loglik\n";
  for (const auto& r : trace)
    os << r.iteration << ',' << r.k_active << ',' << fmt_double(r.log_joint) << ','
       << fmt_double(r.heldout_auc) << ',' << fmt_double(r.heldout_loglik) << "\n";
  return os.str();
}

std::string matrix_csv(const Grid<double>& g, const std::vector<std::string>& row_names,
                       const std::string& corner) {
  std::ostringstream os;
  os << corner;
  for (int k = 0; k < g.cols(); ++k) os << ",c" << k;
  os << "\n";
  for (int i = 0; i < g.rows(); ++i) {
    os << (i < static_cast<int>(row_names.size()) ? row_names[i] : "r" + std::to_string(i));
    for (int k = 0; k < g.cols(); ++k) os << ',' << fmt_double(g(i, k));
    os << "\n";
  }
  return os.str();
}

std::string rows_csv(const MetricsReport& rep) {
  std::ostringstream os;
  os << "fold,chain,train_error,test_error,test_loglik,auc\n";
  for (const auto& r : rep.rows)
    os << r.fold << ',' << r.chain << ',' << fmt_double(r.train_error) << ','
       << fmt_double(r.test_error) << ',' << fmt_double(r.test_loglik) << ','
       << fmt_double(r.auc) << "\n";
  return os.str();
}

// Aggregate row in the benchmark-table column order, formatted "mean -/+ sd".
std::string aggregate_csv(const std::string& model, const MetricsReport& rep) {
  auto cell = [](const Aggregate& a) {
    return fmt_fixed(a.mean) + " ∓ " + fmt_fixed(a.sd);
  };
  std::ostringstream os;
  os << "model,train_error,test_error,test_loglik,auc\n";
  os << model << ',' << cell(rep.train_error) << ',' << cell(rep.test_error) << ','
     << cell(rep.test_loglik) << ',' << cell(rep.auc) << "\n";
  return os.str();
}

json aggregate_json(const Aggregate& a) {
  json j;
  j["mean"] = a.mean;
  j["sd"] = a.sd;
  return j;
}

json report_json(const MetricsReport& rep) {
  json j;
  j["rows"] = json::array();
  for (const auto& r : rep.rows) {
    json row;
    row["fold"] = r.fold;
    row["chain"] = r.chain;
    row["train_error"] = r.train_error;
    row["test_error"] = r.test_error;
    row["test_loglik"] = r.test_loglik;
    row["auc"] = r.auc;
    j["rows"].push_back(row);
  }
  j["aggregate"]["train_error"] = aggregate_json(rep.train_error);
  j["aggregate"]["test_error"] = aggregate_json(rep.test_error);
  j["aggregate"]["test_loglik"] = aggregate_json(rep.test_loglik);
  j["aggregate"]["auc"] = aggregate_json(rep.auc);
  return j;
}

// ---------------------------------------------------------------------------
// Subcommands.

int cmd_simulate(const Options& o) {
  fs::path outdir(o.outdir);
  fs::create_directories(outdir);
  write_file(outdir / "resolved_config", resolved_config(o));

  if (o.plant_k > 0) {
    auto planted = plant_communities(static_cast<int>(o.n_sim), static_cast<int>(o.plant_k),
                                     o.separation, kind_of(o.family), o.seed);
    write_file(outdir / "edges.txt", write_edge_list(planted.net));
    std::ostringstream labels;
    labels << "id,label\n";
    for (int i = 0; i < planted.net.n; ++i) labels << i << ',' << planted.labels[i] << "\n";
    write_file(outdir / "labels.csv", labels.str());
    json j;
    j["B"] = ckpt::grid_to_json(planted.B);
    j["labels"] = planted.labels;
    write_file(outdir / "latents.json", j.dump(1) + "\n");
    write_manifest(outdir);
    std::cout << "planted " << o.plant_k << " blocks over n=" << o.n_sim << " -> " << o.outdir
              << "\n";
    return kExitOk;
  }

  ResolvedModel rm = resolve_model(o.model, o.family);
  SyntheticSpec spec;
  spec.model = rm.model;
  spec.kind = kind_of(o.family);
  spec.family = rm.family;
  spec.n = static_cast<int>(o.n_sim);
  spec.F = static_cast<int>(o.f_sim);
  spec.k_max = static_cast<int>(o.kmax);
  spec.seed = o.seed;
  spec.eta_hyper = {o.alpha_eta, o.beta_eta};
  spec.b_hyper = {o.alpha_b, o.beta_b, o.a_b, o.b_b, o.sigma_b};

  MetadataMatrix phi;
  phi.phi = Grid<std::uint8_t>(spec.n, spec.F, 0);
  Rng meta_rng(Rng::mix(o.seed, 0x137f));
  for (int i = 0; i < spec.n; ++i)
    for (int f = 0; f < spec.F; ++f)
      phi.phi(i, f) = meta_rng.bernoulli(o.meta_density) ? 1 : 0;
  for (int f = 0; f < spec.F; ++f) phi.attribute_names.push_back("attr" + std::to_string(f));

  auto sim = simulate(spec, phi);
  write_file(outdir / "edges.txt", write_edge_list(sim.net));
  write_file(outdir / "metadata.csv", write_metadata_csv(phi));
  json j;
  j["model"] = to_string(rm.model);
  j["family"] = o.family;
  j["eta"] = ckpt::grid_to_json(sim.truth.eta);
  j["psi"] = ckpt::grid_to_json(sim.truth.psi);
  j["pi"] = ckpt::grid_to_json(sim.truth.pi);
  j["B"] = ckpt::grid_to_json(sim.truth.B);
  j["s"] = ckpt::grid_to_json(sim.truth.s);
  j["r"] = ckpt::grid_to_json(sim.truth.r);
  j["z"] = ckpt::grid_to_json(sim.truth.z);
  write_file(outdir / "latents.json", j.dump(1) + "\n");
  write_manifest(outdir);
  std::cout << "simulated " << to_string(rm.model) << " n=" << spec.n << " F=" << spec.F
            << " -> " << o.outdir << "\n";
  return kExitOk;
}

int cmd_fit(const Options& o) {
  ResolvedModel rm = resolve_model(o.model, o.family);
  LoadedInputs in = load_inputs(o, rm);
  RunConfig cfg = run_config(o, rm);

  NetworkData data = in.net;
  fs::path outdir(o.outdir);
  fs::create_directories(outdir);
  write_file(outdir / "resolved_config", resolved_config(o));
  if (o.holdout_fold >= 0) {
    auto plan = make_cv_folds(in.net, cfg.seed);
    data = apply_fold(in.net, plan, static_cast<int>(o.holdout_fold));
    write_file(outdir / "folds.csv", write_folds_csv(plan));
  }

  int chains = cfg.chains;
  std::vector<ChainResult> results(chains);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      int c = next.fetch_add(1);
      if (c >= chains) return;
      RunConfig ccfg = cfg;
      ccfg.seed = Rng::mix(cfg.seed, static_cast<std::uint64_t>(c) + 1);
      if (cfg.checkpoint_every > 0) {
        char name[64];
        std::snprintf(name, sizeof(name), "chains/chain_%02d/checkpoint.json", c);
        ccfg.checkpoint_path = (outdir / name).string();
        fs::create_directories(fs::path(ccfg.checkpoint_path).parent_path());
      }
      results[c] = run_chain(rm.model, rm.family, data, in.meta, ccfg, heldout_trace_metrics(),
                             [](const SamplerState& st, const std::string& p) {
                               write_checkpoint(st, p);
                             });
    }
  };
  int jobs = static_cast<int>(std::max(1L, std::min<long>(o.jobs, chains)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // Per-chain artifacts and metric rows.
  MetricsReport rep;
  for (int c = 0; c < chains; ++c) {
    char dirname[32];
    std::snprintf(dirname, sizeof(dirname), "chains/chain_%02d", c);
    fs::path chain_dir = outdir / dirname;
    write_file(chain_dir / "trace.csv", trace_csv(results[c].trace));
    if (o.snapshot_every > 0) {
      for (std::size_t sdx = 0; sdx < results[c].samples.size();
           sdx += static_cast<std::size_t>(o.snapshot_every)) {
        const Sample& s = results[c].samples[sdx];
        char base[64];
        std::snprintf(base, sizeof(base), "sample_%06ld", results[c].trace[sdx].iteration);
        write_file(chain_dir / (std::string(base) + "_B.csv"), matrix_csv(s.B, {}, "k"));
        write_file(chain_dir / (std::string(base) + "_eta.csv"),
                   matrix_csv(s.eta, in.meta.attribute_names, "attribute"));
      }
    }
    MetricRow row = compute_metrics(results[c].samples, data);
    row.fold = o.holdout_fold >= 0 ? static_cast<int>(o.holdout_fold) : 0;
    row.chain = c;
    rep.rows.push_back(row);
  }
  finalize_report(rep);

  write_file(outdir / "trace.csv", trace_csv(results[0].trace));
  write_file(outdir / "report.json", report_json(rep).dump(1) + "\n");

  if (!results[0].samples.empty())
    write_file(outdir / "B_last.csv", matrix_csv(results[0].samples.back().B, {}, "k"));

  // Importance summary: geometric mean over communities per retained sample,
  // averaged in log space over all retained samples of all chains.
  {
    std::ostringstream os;
    os << "# importance polarity under " << o.model << ": "
       << (rm.model == Model::InfLF ? "larger value = stronger community promotion"
                                    : "smaller value = larger influence")
       << "\n";
    os << "attribute,importance\n";
    int F = in.meta.F();
    if (F > 0 && !rm.drop_metadata) {
      std::vector<double> acc(F, 0.0);
      long count = 0;
      for (const auto& res : results)
        for (const auto& s : res.samples) {
          auto summary = importance_summary(s.eta);
          for (int f = 0; f < F; ++f) acc[f] += std::log(summary[f]);
          ++count;
        }
      for (int f = 0; f < F; ++f)
        os << in.meta.attribute_names[f] << ','
           << fmt_double(count > 0 ? std::exp(acc[f] / count) : 1.0) << "\n";
      if (!results[0].samples.empty())
        write_file(outdir / "eta_last.csv",
                   matrix_csv(results[0].samples.back().eta, in.meta.attribute_names,
                              "attribute"));
    }
    write_file(outdir / "eta_importance.csv", os.str());
  }
  write_manifest(outdir);

  std::cout << "fit " << o.model << "/" << o.family << " n=" << data.n << " chains=" << chains
            << "\n";
  std::cout << "  train_error " << fmt_fixed(rep.train_error.mean) << " ∓ "
            << fmt_fixed(rep.train_error.sd) << "\n";
  if (!std::isnan(rep.auc.mean))
    std::cout << "  heldout auc " << fmt_fixed(rep.auc.mean) << " ∓ "
              << fmt_fixed(rep.auc.sd) << "\n";
  return kExitOk;
}

int cmd_crossval(const Options& o) {
  ResolvedModel rm = resolve_model(o.model, o.family);
  LoadedInputs in = load_inputs(o, rm);
  RunConfig cfg = run_config(o, rm);

  fs::path outdir(o.outdir);
  fs::create_directories(outdir);
  write_file(outdir / "resolved_config", resolved_config(o));

  write_file(outdir / "folds.csv", write_folds_csv(make_cv_folds(in.net, cfg.seed)));
  MetricsReport rep = crossvalidate(rm.model, rm.family, in.net, in.meta, cfg,
                                    static_cast<int>(std::max(1L, o.jobs)));
  write_file(outdir / "metrics_rows.csv", rows_csv(rep));
  write_file(outdir / "metrics_aggregate.csv", aggregate_csv(o.model, rep));
  write_file(outdir / "report.json", report_json(rep).dump(1) + "\n");
  write_manifest(outdir);

  std::cout << "crossval " << o.model << "/" << o.family << ": " << rep.rows.size()
            << " fold-chain rows\n";
  std::cout << "  test_error  " << fmt_fixed(rep.test_error.mean) << " ∓ "
            << fmt_fixed(rep.test_error.sd) << "\n";
  std::cout << "  test_loglik " << fmt_fixed(rep.test_loglik.mean) << " ∓ "
            << fmt_fixed(rep.test_loglik.sd) << "\n";
  std::cout << "  auc         " << fmt_fixed(rep.auc.mean) << " ∓ "
            << fmt_fixed(rep.auc.sd) << "\n";
  return kExitOk;
}

int cmd_diagnose(const Options& o) {
  if (o.trace.empty()) throw DataError("--trace is required");
  std::istringstream is(read_file(o.trace));
  std::string line;
  if (!std::getline(is, line)) throw DataError("trace CSV is empty");
  auto header = detail::split_char(detail::trim(line), ',');
  std::map<std::string, std::size_t> col;
  for (std::size_t c = 0; c < header.size(); ++c) col[detail::trim(header[c])] = c;
  if (!col.count(o.column)) throw DataError("trace has no column '" + o.column + "'");
  std::size_t target = col[o.column];
  std::vector<double> series;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    auto body = detail::trim(line);
    if (body.empty()) continue;
    auto cells = detail::split_char(body, ',');
    if (cells.size() != header.size())
      throw DataError("trace line " + std::to_string(lineno) + ": field count mismatch");
    series.push_back(detail::parse_double(detail::trim(cells[target]),
                                          "trace value at line " + std::to_string(lineno)));
  }
  DiagnosticsReport rep;
  try {
    rep = iat_ess(series);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }

  fs::path outdir(o.outdir);
  fs::create_directories(outdir);
  json j;
  j["column"] = o.column;
  j["tau_hat"] = rep.tau_hat;
  j["ess"] = rep.ess;
  j["ess_standard_nonpaper"] = rep.ess_standard;
  j["cutoff_C"] = rep.cutoff_c;
  j["M"] = rep.m;
  write_file(outdir / "diagnostics.json", j.dump(1) + "\n");
  std::ostringstream os;
  os << "lag,rho\n";
  std::size_t keep = std::min(rep.rho.size(), static_cast<std::size_t>(rep.cutoff_c) + 21);
  for (std::size_t l = 0; l < keep; ++l) os << l << ',' << fmt_double(rep.rho[l]) << "\n";
  write_file(outdir / "rho.csv", os.str());
  write_manifest(outdir);
  std::cout << "tau_hat " << fmt_fixed(rep.tau_hat) << "  ess " << fmt_fixed(rep.ess) << "  C "
            << rep.cutoff_c << "  M " << rep.m << "\n";
  return kExitOk;
}

int cmd_importance(const Options& o) {
  if (o.eta_path.empty()) throw DataError("--eta is required");
  std::istringstream is(read_file(o.eta_path));
  std::string line;
  if (!std::getline(is, line)) throw DataError("eta CSV is empty");
  auto header = detail::split_char(detail::trim(line), ',');
  if (header.size() < 2) throw DataError("eta CSV needs attribute + community columns");
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    auto body = detail::trim(line);
    if (body.empty()) continue;
    auto cells = detail::split_char(body, ',');
    if (cells.size() != header.size())
      throw DataError("eta CSV line " + std::to_string(lineno) + ": field count mismatch");
    names.push_back(detail::trim(cells[0]));
    std::vector<double> vals;
    for (std::size_t c = 1; c < cells.size(); ++c)
      vals.push_back(detail::parse_double(detail::trim(cells[c]), "eta value"));
    rows.push_back(vals);
  }
  if (rows.empty()) throw DataError("eta CSV has no rows");
  Grid<double> eta(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (int f = 0; f < eta.rows(); ++f)
    for (int k = 0; k < eta.cols(); ++k) eta(f, k) = rows[f][k];
  std::vector<double> summary;
  try {
    summary = importance_summary(eta);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }

  fs::path outdir(o.outdir);
  fs::create_directories(outdir);
  std::ostringstream os;
  bool latent = o.model == "inflf" || o.model == "lfrm";
  os << "# importance polarity under " << o.model << ": "
     << (latent ? "larger value = stronger community promotion"
                : "smaller value = larger influence")
     << "\n";
  os << "attribute,importance\n";
  for (std::size_t f = 0; f < names.size(); ++f)
    os << names[f] << ',' << fmt_double(summary[f]) << "\n";
  write_file(outdir / "importance.csv", os.str());
  write_manifest(outdir);
  for (std::size_t f = 0; f < names.size(); ++f)
    std::cout << names[f] << " " << fmt_fixed(summary[f]) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metadata-informed Bayesian relational models for directed networks"};
  app.require_subcommand(1);

  Options o;
  std::string config_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat key=value config file");
    sub->add_option("--outdir", o.outdir, "output directory");
    sub->add_option("--seed", o.seed, "master RNG seed");
    sub->add_option("--model", o.model, "infmm|cinfmm|inflf|immm|lfrm");
    sub->add_option("--family", o.family, "binary|count|unit");
  };
  auto add_run_opts = [&](CLI::App* sub) {
    sub->add_option("--edges", o.edges, "edge list path");
    sub->add_option("--metadata", o.metadata, "metadata CSV path");
    sub->add_option("--rules", o.rules, "binarization rules path");
    sub->add_option("--n", o.n, "entity count (default: autodetect)");
    sub->add_option("--iterations", o.iterations, "MCMC iterations per chain");
    sub->add_option("--burn-in", o.burn_in, "burn-in iterations");
    sub->add_option("--thinning", o.thinning, "retain every k-th post-burn-in sample");
    sub->add_option("--chains", o.chains, "independent chains");
    sub->add_option("--kmax", o.kmax, "truncation level (cinfmm/inflf)");
    sub->add_option("--kinit", o.kinit, "initial K for the infinite sampler");
    sub->add_option("--jobs", o.jobs, "worker threads for chain/fold jobs");
    sub->add_option("--alpha", o.alpha, "concentration for immm/lfrm baselines");
    sub->add_option("--alpha-eta", o.alpha_eta, "eta prior shape");
    sub->add_option("--beta-eta", o.beta_eta, "eta prior rate");
    sub->add_option("--alpha-b", o.alpha_b, "B gamma prior shape");
    sub->add_option("--beta-b", o.beta_b, "B gamma prior rate");
    sub->add_option("--a-b", o.a_b, "B beta prior a");
    sub->add_option("--b-b", o.b_b, "B beta prior b");
    sub->add_option("--sigma-b", o.sigma_b, "B normal prior sd (sigmoid family)");
    sub->add_flag("--resample-hypers", o.resample_hypers, "Metropolis steps on hyperparameters");
    sub->add_flag("--random-scan", o.random_scan, "shuffle the update order each sweep");
    sub->add_flag("--remap-zero-unit", o.remap_zero_unit, "remap unit zeros to 1e-6");
  };

  auto* sim = app.add_subcommand("simulate", "forward-simulate a synthetic dataset");
  add_common(sim);
  sim->add_option("--sim-n", o.n_sim, "entities to simulate");
  sim->add_option("--sim-f", o.f_sim, "binary attributes to simulate");
  sim->add_option("--kmax", o.kmax, "truncation level");
  sim->add_option("--meta-density", o.meta_density, "attribute density");
  sim->add_option("--plant", o.plant_k, "plant K hard blocks instead");
  sim->add_option("--separation", o.separation, "block separation for --plant");
  sim->add_option("--alpha-eta", o.alpha_eta, "eta prior shape");
  sim->add_option("--beta-eta", o.beta_eta, "eta prior rate");

  auto* fit = app.add_subcommand("fit", "run chains on a dataset and report metrics");
  add_common(fit);
  add_run_opts(fit);
  fit->add_option("--holdout-fold", o.holdout_fold, "mark one CV fold as held-out Test");
  fit->add_option("--checkpoint-every", o.checkpoint_every, "iterations between checkpoints");
  fit->add_option("--snapshot-every", o.snapshot_every, "retained samples between B/eta dumps");

  auto* cv = app.add_subcommand("crossval", "ten-fold cross-validated link prediction");
  add_common(cv);
  add_run_opts(cv);

  auto* diag = app.add_subcommand("diagnose", "autocorrelation diagnostics of a trace CSV");
  add_common(diag);
  diag->add_option("--trace", o.trace, "trace CSV path");
  diag->add_option("--column", o.column, "trace column (default K)");

  auto* imp = app.add_subcommand("importance", "geometric-mean importance of an eta CSV");
  add_common(imp);
  imp->add_option("--eta", o.eta_path, "eta snapshot CSV (attribute x community)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  std::map<std::string, bool> given;
  for (const auto* opt : sub->get_options()) {
    if (opt->count() == 0) continue;
    std::string name = opt->get_name();
    if (name.rfind("--", 0) == 0) name = name.substr(2);
    std::replace(name.begin(), name.end(), '-', '_');
    if (name == "plant") name = "plant_k";
    given[name] = true;
  }

  try {
    if (!config_path.empty()) load_config_file(o, config_path, given);
    if (sub == sim) return cmd_simulate(o);
    if (sub == fit) return cmd_fit(o);
    if (sub == cv) return cmd_crossval(o);
    if (sub == diag) return cmd_diagnose(o);
    return cmd_importance(o);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
