// Copyright 2026 The poprec Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// poprec command-line driver.
//
// Every artifact-producing command writes its outputs plus one manifest.json
// into a run directory <run-root>/<UTC timestamp>-<config hash>. Options may
// also come from a TOML file (--config) or POPREC_<OPTION> environment
// variables; precedence is flags, then config file, then environment.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "poprec/common.hpp"
#include "poprec/config_json.hpp"
#include "poprec/eval.hpp"
#include "poprec/ingest.hpp"
#include "poprec/kernels.hpp"
#include "poprec/model.hpp"
#include "poprec/popdyn.hpp"
#include "poprec/synth.hpp"
#include "poprec/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace poprec;

namespace {

struct Global {
  std::size_t threads = 1;
  std::uint64_t seed = 0;
  std::string run_root = "runs";
  std::string run_dir;  // explicit directory, bypasses the naming scheme
  std::string isa;
};

class Run {
 public:
  Run(const CLI::App& root, const CLI::App& sub, const Global& g) : command_(sub.get_name()), start_(clock::now()) {
    resolved_ = root.config_to_str(true, false);
    const std::string hash = sha256_hex(resolved_).substr(0, 12);
    if (!g.run_dir.empty()) {
      dir_ = g.run_dir;
    } else {
      const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
      std::tm tm{};
      gmtime_r(&now, &tm);
      std::ostringstream name;
      name << std::put_time(&tm, "%Y%m%dT%H%M%SZ") << "-" << hash;
      dir_ = fs::path(g.run_root) / name.str();
    }
    fs::create_directories(dir_);
    manifest_["command"] = command_;
    manifest_["config_hash"] = hash;
    manifest_["resolved_config"] = resolved_;
    manifest_["seed"] = g.seed;
    manifest_["threads"] = g.threads;
    manifest_["git_describe"] = std::string(git_describe());
    manifest_["isa"] = std::string(kernels::isa_name(kernels::active_isa()));
    manifest_["inputs"] = json::object();
    manifest_["outputs"] = json::array();
  }

  std::string path(const std::string& explicit_path, const std::string& default_name) const {
    if (!explicit_path.empty()) {
      const auto parent = fs::path(explicit_path).parent_path();
      if (!parent.empty()) fs::create_directories(parent);
      return explicit_path;
    }
    return (dir_ / default_name).string();
  }

  void input(const std::string& role, const std::string& file) {
    manifest_["inputs"][role] = {{"path", file}, {"sha256", sha256_file(file)}};
  }
  void output(const std::string& file) { manifest_["outputs"].push_back(file); }
  json& extra() { return manifest_; }

  void finish() {
    manifest_["wall_seconds"] = std::chrono::duration<double>(clock::now() - start_).count();
    const auto file = (dir_ / "manifest.json").string();
    std::ofstream(file) << manifest_.dump(2) << "\n";
    std::cerr << "run directory: " << dir_.string() << "\n";
  }

 private:
  using clock = std::chrono::steady_clock;
  std::string command_;
  clock::time_point start_;
  std::string resolved_;
  fs::path dir_;
  json manifest_;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

std::string env_name(const std::string& long_name) {
  std::string s = "POPREC_";
  for (char c : long_name) s.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return s;
}

// Every long option can also be set through POPREC_<NAME>.
void bind_env(CLI::App& app) {
  for (auto* opt : app.get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty() || names.front() == "help" || names.front() == "config") continue;
    opt->envname(env_name(names.front()));
  }
}

popdyn::BucketMode parse_bucketing(const std::string& s) {
  if (s == "fixed") return popdyn::BucketMode::kFixed;
  if (s == "calendar") return popdyn::BucketMode::kCalendar;
  throw ConfigError("unknown bucketing '" + s + "' (expected fixed or calendar)");
}

std::vector<std::size_t> parse_k_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(part, &used);
      if (used != part.size() || v <= 0) throw std::invalid_argument(part);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      throw ConfigError("invalid cutoff list '" + s + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty cutoff list");
  return out;
}

void print_stats(const ingest::DatasetStats& s) {
  std::cout << std::left << std::setw(10) << "#users" << std::setw(10) << "#items" << std::setw(12) << "#actions"
            << std::setw(12) << "avg.length" << "density\n";
  std::ostringstream density;
  density << std::fixed << std::setprecision(4) << 100.0 * s.density << "%";
  std::ostringstream avg;
  avg << std::fixed << std::setprecision(2) << s.avg_length;
  std::cout << std::left << std::setw(10) << s.users << std::setw(10) << s.items << std::setw(12) << s.actions
            << std::setw(12) << avg.str() << density.str() << "\n";
  std::cout << "evaluation users: " << s.eval_users << "\n";
}

void print_metrics(const eval::EvalReport& rep) {
  for (const auto& [k, v] : rep.recall) std::cout << "R@" << k << " " << std::fixed << std::setprecision(4) << v << "\n";
  for (const auto& [k, v] : rep.ndcg) std::cout << "N@" << k << " " << std::fixed << std::setprecision(4) << v << "\n";
  std::cout << "users " << rep.users.size() << "\n";
}

struct ModelOpts {
  model::ModelConfig cfg;
  void add(CLI::App& app) {
    app.add_option("--d", cfg.d, "Embedding dimension")->capture_default_str();
    app.add_option("--heads", cfg.heads, "Attention heads")->capture_default_str();
    app.add_option("--layers", cfg.layers, "Transformer layers")->capture_default_str();
    app.add_option("--max-len", cfg.max_len, "Maximum sequence length L")->capture_default_str();
    app.add_option("--dropout", cfg.dropout, "Dropout rate")->capture_default_str();
  }
};

struct EvalOpts {
  eval::EvalConfig cfg;
  std::string k_list = "10";
  void add(CLI::App& app) {
    app.add_option("--negatives", cfg.negatives, "Sampled negatives per evaluation user")->capture_default_str();
    app.add_option("--k", k_list, "Comma-separated cutoffs")->capture_default_str();
    app.add_option("--offset", cfg.offset, "Prediction-time offset in fine periods")->capture_default_str();
  }
  eval::EvalConfig resolve(const Global& g) {
    cfg.k_list = parse_k_list(k_list);
    cfg.seed = g.seed;
    cfg.threads = g.threads;
    cfg.validate();
    return cfg;
  }
};

int run_main(int argc, char** argv) {
  CLI::App app{"poprec: sequential recommendation from item popularity dynamics"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML configuration file");
  Global g;
  app.add_option("--threads", g.threads, "Worker threads (1 = reproducible mode)")->capture_default_str();
  app.add_option("--seed", g.seed, "Root random seed")->capture_default_str();
  app.add_option("--run-root", g.run_root, "Parent directory for run directories")->capture_default_str();
  app.add_option("--run-dir", g.run_dir, "Use this run directory instead of a generated one");
  app.add_option("--isa", g.isa, "Kernel ISA override: scalar, avx2, neon");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Parse a log, build the leave-one-out split and cache it");
  std::string pre_input, pre_format = "csv", pre_out, pre_cache = "binary";
  std::string pre_delim;
  bool pre_header = false;
  ingest::ColumnMap cols;
  pre->add_option("--input", pre_input, "Interaction log")->required();
  pre->add_option("--format", pre_format, "csv or tsv")->capture_default_str();
  pre->add_option("--delimiter", pre_delim, "Field delimiter override (one character)");
  pre->add_flag("--header", pre_header, "First line is a header");
  pre->add_option("--user-col", cols.user, "User column")->capture_default_str();
  pre->add_option("--item-col", cols.item, "Item column")->capture_default_str();
  pre->add_option("--time-col", cols.timestamp, "Timestamp column (integer seconds)")->capture_default_str();
  pre->add_option("--rating-col", cols.rating, "Rating column, -1 for none")->capture_default_str();
  pre->add_option("--cache-format", pre_cache, "binary or ndjson")->capture_default_str();
  pre->add_option("--out", pre_out, "Dataset cache path");

  // popdyn
  auto* pop = app.add_subcommand("popdyn", "Compute the popularity-dynamics cache");
  std::string pop_dataset, pop_out, pop_bucketing = "fixed";
  popdyn::PopularityConfig pcfg;
  pop->add_option("--dataset", pop_dataset, "Dataset cache")->required();
  pop->add_option("--gamma", pcfg.gamma, "Coarse-period discount factor")->capture_default_str();
  pop->add_option("--fine-days", pcfg.fine_days, "Fine period length in days")->capture_default_str();
  pop->add_option("--coarse-fine-ratio", pcfg.coarse_fine_ratio, "Fine periods per coarse period")
      ->capture_default_str();
  pop->add_option("--bucketing", pop_bucketing, "fixed or calendar")->capture_default_str();
  pop->add_option("--m", pcfg.m, "Coarse periods in the window")->capture_default_str();
  pop->add_option("--n", pcfg.n, "Fine periods in the window")->capture_default_str();
  pop->add_flag("--include-inactive", pcfg.include_inactive, "Rank not-yet-seen items as zero counts");
  pop->add_flag("--exclude-eval-events", pcfg.exclude_eval_events, "Count only training events");
  pop->add_option("--out", pop_out, "Popularity cache path");

  // train
  auto* tr = app.add_subcommand("train", "Train one model per seed");
  std::string tr_dataset, tr_popcache, tr_loss = "default";
  std::size_t tr_seeds = 1;
  bool tr_verbose = false;
  train::TrainConfig tcfg;
  ModelOpts tr_model;
  tr->add_option("--dataset", tr_dataset, "Dataset cache")->required();
  tr->add_option("--popcache", tr_popcache, "Popularity cache")->required();
  tr->add_option("--seeds", tr_seeds, "Number of seeds (seed, seed+1, ...)")->capture_default_str();
  tr->add_option("--epochs", tcfg.max_epochs, "Maximum epochs")->capture_default_str();
  tr->add_option("--batch-size", tcfg.batch_size, "Users per batch")->capture_default_str();
  tr->add_option("--lr", tcfg.lr, "Adam learning rate")->capture_default_str();
  tr->add_option("--weight-decay", tcfg.weight_decay, "L2 weight decay")->capture_default_str();
  tr->add_option("--negatives", tcfg.negatives_per_positive, "Negatives per positive")->capture_default_str();
  tr->add_option("--patience", tcfg.patience, "Early-stopping patience in epochs")->capture_default_str();
  tr->add_option("--loss", tr_loss, "default or paper-literal")->capture_default_str();
  tr->add_option("--offset", tcfg.offset, "Prediction-time offset in fine periods")->capture_default_str();
  tr->add_flag("--verbose", tr_verbose, "Log per-epoch progress");
  tr_model.add(*tr);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint or the MostPop baseline on the test split");
  std::string ev_ckpt, ev_dataset, ev_popcache, ev_out, ev_baseline;
  EvalOpts ev_opts;
  ev->add_option("--checkpoint", ev_ckpt, "Model checkpoint");
  ev->add_option("--dataset", ev_dataset, "Dataset cache")->required();
  ev->add_option("--popcache", ev_popcache, "Popularity cache");
  ev->add_option("--baseline", ev_baseline, "Evaluate a baseline instead: mostpop");
  ev->add_option("--out", ev_out, "Report path (NDJSON)");
  ev_opts.add(*ev);

  // transfer
  auto* xf = app.add_subcommand("transfer", "Zero-shot evaluation of a checkpoint on another dataset");
  std::string xf_ckpt, xf_dataset, xf_popcache, xf_out;
  EvalOpts xf_opts;
  xf->add_option("--checkpoint", xf_ckpt, "Checkpoint trained on the source dataset")->required();
  xf->add_option("--dataset", xf_dataset, "Target dataset cache")->required();
  xf->add_option("--popcache", xf_popcache, "Target popularity cache")->required();
  xf->add_option("--out", xf_out, "Report path (NDJSON)");
  xf_opts.add(*xf);

  // interpolate
  auto* ip = app.add_subcommand("interpolate", "Blend a report with external scores on the same candidates");
  std::string ip_report, ip_scores, ip_out;
  double ip_alpha = 0.5;
  ip->add_option("--report", ip_report, "Our evaluation report")->required();
  ip->add_option("--scores", ip_scores, "External score file (NDJSON)")->required();
  ip->add_option("--alpha", ip_alpha, "Weight of our scores")->capture_default_str();
  ip->add_option("--out", ip_out, "Interpolated report path");

  // leakage
  auto* lk = app.add_subcommand("leakage", "Audit training interactions dated after test interactions");
  std::string lk_dataset;
  lk->add_option("--dataset", lk_dataset, "Dataset cache")->required();

  // params-report
  auto* pr = app.add_subcommand("params-report", "Print the parameter count for a configuration");
  ModelOpts pr_model;
  pr_model.add(*pr);
  pr->add_option("--m", pr_model.cfg.m, "Coarse periods in the window")->capture_default_str();
  pr->add_option("--n", pr_model.cfg.n, "Fine periods in the window")->capture_default_str();

  // synth
  auto* sy = app.add_subcommand("synth", "Generate a synthetic interaction log (CSV)");
  synth::SynthConfig scfg;
  std::string sy_out;
  sy->add_option("--users", scfg.users, "Users")->capture_default_str();
  sy->add_option("--items", scfg.items, "Items")->capture_default_str();
  sy->add_option("--horizon-days", scfg.horizon_days, "Time span in days")->capture_default_str();
  sy->add_option("--min-events", scfg.min_events, "Minimum events per user")->capture_default_str();
  sy->add_option("--max-events", scfg.max_events, "Maximum events per user")->capture_default_str();
  sy->add_option("--trend", scfg.trend_strength, "Trend-following strength")->capture_default_str();
  sy->add_option("--out", sy_out, "Output CSV path");

  for (auto* sub : app.get_subcommands({})) bind_env(*sub);
  bind_env(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (!g.isa.empty()) {
    if (g.isa == "scalar") kernels::set_active_isa(kernels::Isa::kScalar);
    else if (g.isa == "avx2") kernels::set_active_isa(kernels::Isa::kAvx2);
    else if (g.isa == "neon") kernels::set_active_isa(kernels::Isa::kNeon);
    else throw ConfigError("unknown ISA '" + g.isa + "'");
  }
  if (g.threads == 0) throw ConfigError("--threads must be at least 1");

  if (*pre) {
    Run run(app, *pre, g);
    ingest::ParseOptions opts;
    if (pre_format == "csv") opts.format = ingest::Format::kCsv;
    else if (pre_format == "tsv") opts.format = ingest::Format::kTsv;
    else throw ConfigError("unknown format '" + pre_format + "'");
    if (pre_delim.size() > 1) throw ConfigError("--delimiter must be a single character");
    if (!pre_delim.empty()) opts.delimiter = pre_delim[0];
    opts.header = pre_header;
    opts.columns = cols;
    ingest::CacheFormat fmt;
    if (pre_cache == "binary") fmt = ingest::CacheFormat::kBinary;
    else if (pre_cache == "ndjson") fmt = ingest::CacheFormat::kNdjson;
    else throw ConfigError("unknown cache format '" + pre_cache + "'");

    ingest::ParseReport report;
    run.input("log", pre_input);
    auto ds = ingest::build_split(ingest::parse_log(pre_input, opts, &report));
    for (std::size_t i = 0; i < std::min<std::size_t>(report.errors.size(), 10); ++i) {
      warn("line " + std::to_string(report.errors[i].line) + ": " + report.errors[i].message);
    }
    if (report.errors.size() > 10) warn(std::to_string(report.errors.size() - 10) + " more malformed rows skipped");
    const auto out = run.path(pre_out, fmt == ingest::CacheFormat::kBinary ? "dataset.bin" : "dataset.ndjson");
    ingest::save_dataset(ds, out, fmt);
    run.output(out);
    print_stats(ds.stats());
    std::cout << "rows read " << report.rows_read << ", kept " << report.rows_kept << ", skipped "
              << report.errors.size() << "\n";
    std::cout << "dataset fingerprint " << ds.fingerprint() << "\n";
    run.extra()["dataset_fingerprint"] = ds.fingerprint();
    run.finish();
    return kExitOk;
  }

  if (*pop) {
    Run run(app, *pop, g);
    pcfg.mode = parse_bucketing(pop_bucketing);
    run.input("dataset", pop_dataset);
    const auto ds = ingest::load_dataset(pop_dataset);
    const auto pt = popdyn::PopularityTable::build(ds, pcfg, g.threads);
    const auto out = run.path(pop_out, "popularity.bin");
    pt.save(out);
    run.output(out);
    run.extra()["popularity"] = pcfg;
    std::cout << "items " << pt.item_count() << ", fine periods " << pt.fine_periods() << ", coarse periods "
              << pt.coarse_periods() << "\n";
    run.finish();
    return kExitOk;
  }

  if (*tr) {
    Run run(app, *tr, g);
    tcfg.loss = train::parse_loss_mode(tr_loss);
    tcfg.threads = g.threads;
    tcfg.log_progress = tr_verbose;
    if (tr_seeds == 0) throw ConfigError("--seeds must be at least 1");
    run.input("dataset", tr_dataset);
    run.input("popcache", tr_popcache);
    const auto ds = ingest::load_dataset(tr_dataset);
    const auto pt = popdyn::PopularityTable::load(tr_popcache);
    if (pt.dataset_fingerprint() != ds.fingerprint()) {
      throw ConfigError("popularity cache was built from a different dataset");
    }
    auto mcfg = tr_model.cfg;
    mcfg.k = pt.config().k;
    mcfg.m = pt.config().m;
    mcfg.n = pt.config().n;
    mcfg.gamma = pt.config().gamma;
    mcfg.validate();

    eval::EvalConfig ecfg;
    ecfg.seed = g.seed;
    ecfg.offset = tcfg.offset;
    ecfg.threads = g.threads;
    ecfg.k_list = {10};
    std::vector<double> recalls, ndcgs;
    json seeds = json::array();
    for (std::size_t s = 0; s < tr_seeds; ++s) {
      auto cfg = tcfg;
      cfg.seed = g.seed + s;
      const auto res = train::fit(ds, pt, mcfg, cfg);
      model::CheckpointMeta meta;
      meta.model = mcfg;
      meta.pop = pt.config();
      meta.offset = cfg.offset;
      meta.seed = cfg.seed;
      meta.git_describe = std::string(git_describe());
      meta.dataset_fingerprint = ds.fingerprint();
      meta.learning_rate = cfg.lr;
      meta.epochs = res.best_epoch;
      const auto ckpt = run.path("", "model-seed" + std::to_string(cfg.seed) + ".ckpt");
      model::save_checkpoint(ckpt, res.best, meta);
      const auto curve = run.path("", "curve-seed" + std::to_string(cfg.seed) + ".json");
      write_text(curve, res.curve_json().dump(2) + "\n");
      auto ecfg_s = ecfg;
      ecfg_s.seed = cfg.seed;
      const auto test = eval::evaluate(res.best, ds, pt, ecfg_s);
      recalls.push_back(test.recall.at(10));
      ndcgs.push_back(test.ndcg.at(10));
      run.output(ckpt);
      run.output(curve);
      seeds.push_back({{"seed", cfg.seed},
                       {"best_epoch", res.best_epoch},
                       {"best_val_ndcg10", res.best_val_ndcg10},
                       {"test_recall10", test.recall.at(10)},
                       {"test_ndcg10", test.ndcg.at(10)},
                       {"checkpoint", ckpt}});
      std::cout << "seed " << cfg.seed << ": best epoch " << res.best_epoch << ", test R@10 " << std::fixed
                << std::setprecision(4) << test.recall.at(10) << ", N@10 " << test.ndcg.at(10) << "\n";
    }
    const auto r = eval::mean_std(recalls);
    const auto n = eval::mean_std(ndcgs);
    json summary = {{"seeds", seeds},
                    {"model", mcfg},
                    {"popularity", pt.config()},
                    {"test_recall10", {{"mean", r.mean}, {"std", r.stddev}}},
                    {"test_ndcg10", {{"mean", n.mean}, {"std", n.stddev}}}};
    const auto sp = run.path("", "summary.json");
    write_text(sp, summary.dump(2) + "\n");
    run.output(sp);
    std::cout << "R@10 " << std::fixed << std::setprecision(4) << r.mean << " +- " << r.stddev << ", N@10 " << n.mean
              << " +- " << n.stddev << " over " << tr_seeds << " seed(s)\n";
    run.finish();
    return kExitOk;
  }

  if (*ev) {
    Run run(app, *ev, g);
    const auto ecfg = ev_opts.resolve(g);
    run.input("dataset", ev_dataset);
    const auto ds = ingest::load_dataset(ev_dataset);
    eval::EvalReport rep;
    if (!ev_baseline.empty()) {
      if (ev_baseline != "mostpop") throw ConfigError("unknown baseline '" + ev_baseline + "'");
      rep = eval::mostpop_baseline(ds, ecfg);
    } else {
      if (ev_ckpt.empty() || ev_popcache.empty()) {
        throw ConfigError("eval needs --checkpoint and --popcache (or --baseline mostpop)");
      }
      run.input("checkpoint", ev_ckpt);
      run.input("popcache", ev_popcache);
      const auto [params, meta] = model::load_checkpoint(ev_ckpt);
      const auto pt = popdyn::PopularityTable::load(ev_popcache);
      if (pt.dataset_fingerprint() != ds.fingerprint()) {
        throw ConfigError("popularity cache was built from a different dataset");
      }
      auto diff = eval::config_mismatches(meta, pt.config(), ecfg.offset);
      if (!diff.empty()) {
        std::string msg = "checkpoint does not match the popularity cache:";
        for (const auto& d : diff) msg += "\n  " + d;
        throw ConfigError(msg);
      }
      rep = eval::evaluate(params, ds, pt, ecfg);
    }
    const auto out = run.path(ev_out, "report.ndjson");
    eval::save_report(out, rep);
    run.output(out);
    print_metrics(rep);
    run.extra()["summary"] = rep.summary_json();
    run.finish();
    return kExitOk;
  }

  if (*xf) {
    Run run(app, *xf, g);
    const auto ecfg = xf_opts.resolve(g);
    run.input("checkpoint", xf_ckpt);
    run.input("dataset", xf_dataset);
    run.input("popcache", xf_popcache);
    const auto [params, meta] = model::load_checkpoint(xf_ckpt);
    const auto ds = ingest::load_dataset(xf_dataset);
    const auto pt = popdyn::PopularityTable::load(xf_popcache);
    if (pt.dataset_fingerprint() != ds.fingerprint()) {
      throw ConfigError("popularity cache was built from a different dataset");
    }
    const auto rep = eval::zero_shot(params, meta, ds, pt, ecfg);
    const auto out = run.path(xf_out, "report.ndjson");
    eval::save_report(out, rep);
    run.output(out);
    print_metrics(rep);
    std::cout << "parameter digest " << params.digest() << " (unchanged)\n";
    run.extra()["summary"] = rep.summary_json();
    run.finish();
    return kExitOk;
  }

  if (*ip) {
    Run run(app, *ip, g);
    run.input("report", ip_report);
    run.input("scores", ip_scores);
    const auto ours = eval::load_report(ip_report);
    const auto ext = eval::ScoreFile::load(ip_scores);
    const auto rep = eval::interpolate(ours, ext, ip_alpha);
    const auto out = run.path(ip_out, "report.ndjson");
    eval::save_report(out, rep);
    run.output(out);
    print_metrics(rep);
    run.extra()["summary"] = rep.summary_json();
    run.finish();
    return kExitOk;
  }

  if (*lk) {
    const auto ds = ingest::load_dataset(lk_dataset);
    const auto st = eval::leakage_audit(ds);
    std::cout << "test interactions " << st.test_items << "\n"
              << "mean future training interactions " << std::fixed << std::setprecision(3) << st.mean_future_count
              << "\n"
              << "mean future proportion " << std::setprecision(2) << 100.0 * st.mean_future_proportion << "%\n";
    return kExitOk;
  }

  if (*pr) {
    auto cfg = pr_model.cfg;
    cfg.validate();
    const std::size_t d = cfg.d;
    std::cout << "item encoder (W_p)   " << d * cfg.window_width() << "\n"
              << "attention per layer  " << 4 * d * d << "\n"
              << "ffn per layer        " << 2 * d * d + 2 * d << "\n"
              << "norms per layer      " << 4 * d << "\n"
              << "final norm           " << 2 * d << "\n"
              << "total                " << model::count_params(cfg) << "\n";
    return kExitOk;
  }

  if (*sy) {
    Run run(app, *sy, g);
    const auto data = synth::generate(scfg, g.seed);
    const auto& ds = data.dataset;
    std::string csv;
    for (ingest::UserIndex u = 0; u < ds.user_count(); ++u) {
      for (const auto& e : ds.sequence(u)) {
        csv += ds.user_id(u) + "," + ds.item_id(e.item) + "," + std::to_string(e.timestamp) + "\n";
      }
    }
    const auto out = run.path(sy_out, "synthetic.csv");
    write_text(out, csv);
    run.output(out);
    std::cout << "users " << ds.user_count() << ", items " << ds.item_count() << ", interactions "
              << ds.interaction_count() << "\n";
    run.finish();
    return kExitOk;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_main(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "poprec: configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "poprec: numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    std::cerr << "poprec: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "poprec: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "poprec: internal error: " << e.what() << "\n";
    return 1;
  }
}
