// lifereid command-line driver: gen-data, train, eval, grad-check, ablate.
//
// Exit codes: 0 success, 1 verification failure or other runtime error,
// 2 configuration error, 3 I/O error.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lifereid/lifereid.hpp"

namespace {

using namespace lifereid;

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidSpec: return kExitConfig;
    case ErrorCode::Io:
    case ErrorCode::HeaderMismatch:
    case ErrorCode::MalformedRow: return kExitIo;
    default: return kExitFailed;
  }
}

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string out;
};

std::vector<int> parse_order(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidConfig, "--order: '" + item + "' is not an integer");
    }
  }
  if (out.empty()) throw Error(ErrorCode::InvalidConfig, "--order is empty");
  return out;
}

std::optional<std::size_t> env_threads() {
  const char* v = std::getenv("LIFEREID_THREADS");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long n = std::strtoull(v, &end, 10);
  if (*end != '\0' || n == 0) throw Error(ErrorCode::InvalidConfig, "LIFEREID_THREADS must be a positive integer");
  return static_cast<std::size_t>(n);
}

RunConfig resolve(const CommonOptions& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  else if (const auto t = env_threads()) c.threads = *t;
  return c;
}

void add_common(CLI::App* cmd, CommonOptions& o, bool needs_out) {
  cmd->add_option("--config", o.config, "JSON configuration file");
  cmd->add_option("--seed", o.seed, "master seed (overrides the config)");
  cmd->add_option("--threads", o.threads, "worker threads (falls back to LIFEREID_THREADS)");
  auto* out = cmd->add_option("--out", o.out, "output directory");
  if (needs_out) out->required();
}

Benchmark load_or_generate(const std::string& data_dir, const RunConfig& cfg) {
  return data_dir.empty() ? generate_benchmark(cfg.data, cfg.seed) : load_dataset_dir(data_dir);
}

void print_summary(const SequenceResult& res) {
  for (const auto& s : res.summaries) {
    std::printf("step %zu  seen mAP %.1f R1 %.1f", s.step, s.seen_map, s.seen_rank1);
    if (s.has_unseen) std::printf("  unseen mAP %.1f R1 %.1f", s.unseen_map, s.unseen_rank1);
    std::printf("\n");
  }
}

int cmd_gen_data(const CommonOptions& o) {
  const RunConfig cfg = resolve(o);
  write_dataset_dir(o.out, cfg.data, cfg.seed);
  std::printf("wrote %zu domains to %s\n", cfg.data.num_domains(), o.out.c_str());
  return kExitOk;
}

struct TrainOptions {
  std::string data;
  std::string order;
  std::string ablation;
  std::optional<double> lambda_cam;
  std::optional<std::size_t> n_mem;
};

void apply_train_overrides(RunConfig& cfg, const TrainOptions& t) {
  if (!t.order.empty()) cfg.order = parse_order(t.order);
  if (!t.ablation.empty()) {
    const auto a = parse_ablation(t.ablation);
    if (!a) throw Error(ErrorCode::InvalidConfig, "--ablation: unknown value '" + t.ablation + "'");
    cfg.ablation = *a;
  }
  if (t.lambda_cam) cfg.pipeline.weights.lambda_cam = *t.lambda_cam;
  if (t.n_mem) cfg.pipeline.n_mem = *t.n_mem;
  cfg.validate();
}

int cmd_train(const CommonOptions& o, const TrainOptions& t) {
  RunConfig cfg = resolve(o);
  apply_train_overrides(cfg, t);
  const Benchmark bench = load_or_generate(t.data, cfg);
  const auto res = run_sequence(bench.ordered(cfg.resolved_order()), bench.unseen, cfg.resolved_pipeline());
  write_run_directory(o.out, cfg, res);
  print_summary(res);
  return kExitOk;
}

int cmd_ablate(const CommonOptions& o, const TrainOptions& t) {
  RunConfig base = resolve(o);
  apply_train_overrides(base, t);
  const Benchmark bench = load_or_generate(t.data, base);
  std::string table = "ablation,step,seen_mAP,seen_rank1,unseen_mAP,unseen_rank1\n";
  for (Ablation a : {Ablation::Pa, Ablation::PaIa, Ablation::PaIaPs, Ablation::PaIaIs, Ablation::Full}) {
    RunConfig cfg = base;
    cfg.ablation = a;
    const auto res = run_sequence(bench.ordered(cfg.resolved_order()), bench.unseen, cfg.resolved_pipeline());
    const std::string name(to_string(a));
    write_run_directory(fs::path(o.out) / name, cfg, res);
    std::printf("[%s]\n", name.c_str());
    print_summary(res);
    char buf[160];
    for (const auto& s : res.summaries) {
      std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f,%.6f,%.6f\n", name.c_str(), s.step, s.seen_map, s.seen_rank1,
                    s.unseen_map, s.unseen_rank1);
      table += buf;
    }
  }
  write_text(fs::path(o.out) / "ablation.csv", table);
  return kExitOk;
}

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::string snapshots;
  std::string out;
  std::optional<std::size_t> threads;
};

int cmd_eval(const EvalOptions& e) {
  std::size_t threads = 1;
  if (e.threads) threads = *e.threads;
  else if (const auto t = env_threads()) threads = *t;
  const Checkpoint ck = load_checkpoint(e.checkpoint);
  const Benchmark bench = load_dataset_dir(e.data);
  std::vector<MetricRow> rows;
  for (const auto& d : bench.seen) {
    const auto self = evaluate_domain(ck.momentum, d.test, threads);
    rows.push_back({ck.step, d.test.domain_id, true, "self", self.map, self.rank1});
    const auto snap = e.snapshots.empty() ? std::nullopt : earliest_gallery(e.snapshots, d.test.domain_id);
    if (!snap) {
      std::fprintf(stderr, "warning: no stored gallery for domain %d, cross-test skipped\n", d.test.domain_id);
      continue;
    }
    const auto cross = cross_test(ck.momentum, d.test, load_gallery(snap->string()), threads);
    rows.push_back({ck.step, d.test.domain_id, true, "cross", cross.map, cross.rank1});
  }
  for (const auto& d : bench.unseen) {
    const auto self = evaluate_domain(ck.momentum, d.test, threads);
    rows.push_back({ck.step, d.test.domain_id, false, "self", self.map, self.rank1});
  }
  const std::string csv = metrics_csv(rows);
  if (e.out.empty()) std::fputs(csv.c_str(), stdout);
  else write_text(e.out, csv);
  return kExitOk;
}

struct GradOptions {
  std::uint64_t seed = 0;
  std::size_t trials = 100;
  double corrupt = 0.0;
};

int cmd_grad_check(const GradOptions& g) {
  GradCheckConfig cfg;
  cfg.seed = g.seed;
  cfg.trials = g.trials;
  cfg.corrupt = g.corrupt;
  const auto report = run_grad_check(cfg);
  std::printf("%-10s %8s %14s\n", "loss", "trials", "max_rel_error");
  for (const auto& l : report.losses)
    std::printf("%-10s %8zu %14.3e\n", std::string(to_string(l.kind)).c_str(), l.trials, l.max_rel_error);
  std::printf("tolerance %.1e: %s\n", report.tolerance, report.passed() ? "ok" : "FAILED");
  return report.passed() ? kExitOk : kExitFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lifelong unsupervised re-identification on synthetic domains"};
  app.require_subcommand(1);

  CommonOptions gen_opts, train_opts, ablate_opts;
  TrainOptions train_extra, ablate_extra;
  EvalOptions eval_opts;
  GradOptions grad_opts;

  auto* gen = app.add_subcommand("gen-data", "write domain CSVs and a manifest");
  add_common(gen, gen_opts, true);

  auto add_train_flags = [](CLI::App* cmd, TrainOptions& t, bool with_ablation) {
    cmd->add_option("--data", t.data, "dataset directory from gen-data (generated in memory if omitted)");
    cmd->add_option("--order", t.order, "seen-domain training order, e.g. 2,0,1");
    if (with_ablation) cmd->add_option("--ablation", t.ablation, "pa | pa_ia | pa_ia_ps | pa_ia_is | full");
    cmd->add_option("--lambda-cam", t.lambda_cam, "camera-proxy loss weight");
    cmd->add_option("--n-mem", t.n_mem, "memory buffer capacity");
  };

  auto* train = app.add_subcommand("train", "train over the seen domains and write a run directory");
  add_common(train, train_opts, true);
  add_train_flags(train, train_extra, true);

  auto* ablate = app.add_subcommand("ablate", "train every loss ablation into OUT/<name>");
  add_common(ablate, ablate_opts, true);
  add_train_flags(ablate, ablate_extra, false);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint against a dataset directory");
  eval->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint file")->required();
  eval->add_option("--data", eval_opts.data, "dataset directory")->required();
  eval->add_option("--snapshots", eval_opts.snapshots, "directory of stored gallery features");
  eval->add_option("--out", eval_opts.out, "metrics CSV path (stdout if omitted)");
  eval->add_option("--threads", eval_opts.threads, "worker threads (falls back to LIFEREID_THREADS)");

  auto* grad = app.add_subcommand("grad-check", "finite-difference check of every loss gradient");
  grad->add_option("--seed", grad_opts.seed, "seed");
  grad->add_option("--trials", grad_opts.trials, "random configurations per loss");
  grad->add_option("--corrupt-gradient", grad_opts.corrupt)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(gen_opts);
    if (*train) return cmd_train(train_opts, train_extra);
    if (*ablate) return cmd_ablate(ablate_opts, ablate_extra);
    if (*eval) return cmd_eval(eval_opts);
    if (*grad) return cmd_grad_check(grad_opts);
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", std::string(to_string(e.code())).c_str(), e.what());
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error (Io): %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailed;
  }
  return kExitFailed;
}
