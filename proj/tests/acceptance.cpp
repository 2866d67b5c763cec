// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. argv[1] is the lifereid_cli binary (used by the determinism check).

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "lifereid/lifereid.hpp"
#include "oracles.hpp"

using namespace lifereid;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

FeatureVector random_unit(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.normal();
  return normalize(v);
}

std::vector<FeatureVector> blobs(Rng& rng, std::size_t n, std::size_t d, std::size_t k, double spread) {
  std::vector<FeatureVector> centres;
  for (std::size_t c = 0; c < k; ++c) centres.push_back(random_unit(rng, d));
  std::vector<FeatureVector> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = centres[rng.below(k)];
    std::vector<double> v(c.begin(), c.end());
    for (auto& x : v) x += rng.normal(0.0, spread);
    out.push_back(normalize(v));
  }
  return out;
}

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckConfig cfg;
  cfg.trials = 100;
  const auto report = run_grad_check(cfg);
  const double secs = seconds_since(t0);
  Outcome o;
  double worst = 0.0;
  for (const auto& l : report.losses) {
    worst = std::max(worst, l.max_rel_error);
    if (l.trials < 100) o.pass = false;
  }
  o.pass = o.pass && report.losses.size() == kAllLosses.size() && report.passed() && secs < 60.0;
  o.detail = "6 losses x 100 configs, max rel err " + fmt("%.2e", worst) + ", " + fmt("%.1f s", secs);
  return o;
}

Outcome metric_oracle() {
  Outcome o;
  // Worked example: relevant items at ranks 1 and 3.
  auto unit2 = [](double a) { return normalize(std::vector<double>{std::cos(a), std::sin(a)}); };
  const std::vector<FeatureVector> g{unit2(0.0), unit2(0.1), unit2(0.2), unit2(0.3)};
  const double ap = average_precision(unit2(0.0), g, std::vector<int>{1, 2, 1, 3}, std::vector<int>{1, 1, 1, 1}, 1, 0);
  o.pass = std::abs(ap - 5.0 / 6.0) < 1e-15;

  Rng rng(2024);
  std::size_t mismatches = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n_g = 1 + rng.below(200), n_q = 1 + rng.below(20);
    const bool coarse = t % 2 == 0;  // coarse angles force similarity ties
    auto feat = [&] { return coarse ? unit2(0.25 * static_cast<double>(rng.below(10))) : random_unit(rng, 6); };
    std::vector<FeatureVector> gal, qs;
    oracle::Dense dense;
    std::vector<int> gid, gcam, qid, qcam;
    for (std::size_t i = 0; i < n_g; ++i) {
      gal.push_back(feat());
      dense.push_back(gal.back().vec());
      gid.push_back(static_cast<int>(rng.below(8)));
      gcam.push_back(static_cast<int>(rng.below(3)));
    }
    for (std::size_t i = 0; i < n_q; ++i) {
      qs.push_back(feat());
      qid.push_back(static_cast<int>(rng.below(8)));
      qcam.push_back(static_cast<int>(rng.below(3)));
    }
    double ap_sum = 0.0, hit_sum = 0.0;
    std::size_t valid = 0;
    for (std::size_t i = 0; i < n_q; ++i) {
      const auto r = oracle::average_precision(qs[i].vec(), qid[i], qcam[i], dense, gid, gcam);
      if (!r.valid) continue;
      ++valid;
      ap_sum += r.ap;
      hit_sum += r.top1 ? 1.0 : 0.0;
    }
    if (valid == 0) {
      try {
        retrieval(qs, qid, qcam, gal, gid, gcam);
        ++mismatches;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoValidQueries) ++mismatches;
      }
      continue;
    }
    const auto got = retrieval(qs, qid, qcam, gal, gid, gcam, 2);
    if (got.map != 100.0 * ap_sum / static_cast<double>(valid) ||
        got.rank1 != 100.0 * hit_sum / static_cast<double>(valid) || got.valid_queries != valid)
      ++mismatches;
  }
  o.pass = o.pass && mismatches == 0;
  o.detail = "AP example " + fmt("%.4f", ap) + ", " + std::to_string(50 - mismatches) + "/50 instances exact";
  return o;
}

Outcome clustering_oracles() {
  Rng rng(77);
  std::size_t db_ok = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.below(64);
    const auto f = blobs(rng, n, 4, 1 + rng.below(5), rng.uniform(0.05, 0.4));
    const auto d = pairwise_cosine_distance(f);
    const double eps = rng.uniform(0.02, 0.6);
    const std::size_t min_pts = 1 + rng.below(6);
    const auto got = oracle::dbscan_partition_of_labels(dbscan(d, eps, min_pts));
    const auto want = oracle::dbscan_partition_of_labels(oracle::naive_dbscan(oracle::to_dense(d), eps, min_pts));
    db_ok += got == want ? 1 : 0;
  }
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 8 + rng.below(57);
    const auto f = blobs(rng, n, 8, 2 + rng.below(5), 0.25);
    const auto d = pairwise_cosine_distance(f);
    RerankParams p;
    p.k1 = 1 + rng.below(30);
    p.k2 = 1 + rng.below(p.k1);
    p.lambda_rr = rng.uniform();
    const auto got = k_reciprocal_jaccard(d, p);
    const auto want = oracle::rerank(oracle::to_dense(d), p.k1, p.k2, p.lambda_rr);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) worst = std::max(worst, std::abs(got(i, j) - want[i][j]));
  }
  return {db_ok == 100 && worst <= 1e-9,
          "dbscan " + std::to_string(db_ok) + "/100 partitions equal, rerank max abs diff " + fmt("%.1e", worst)};
}

Outcome buffer_arithmetic() {
  Rng rng(5);
  std::size_t quota_ok = 0, trials = 0;
  while (trials < 1000) {
    const std::size_t p = rng.below(2000), o = rng.below(2000), n_mem = 1 + rng.below(1024);
    if (p == 0 && o == 0) continue;
    ++trials;
    const auto q = quotas(p, o, n_mem);
    quota_ok += q.n_new + q.n_old == std::min(n_mem, p + o) && q.n_new <= p && q.n_old <= o ? 1 : 0;
  }
  const bool worked = quotas(300, 500, 512) == Quotas{192, 320};

  std::size_t select_ok = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t clusters = 1 + rng.below(12), n = clusters + rng.below(80), d = 4;
    std::vector<int> labels(n), cams(n);
    std::vector<FeatureVector> feats;
    std::vector<std::vector<double>> samples;
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = i < clusters ? static_cast<int>(i) : (rng.bernoulli(0.1) ? -1 : static_cast<int>(rng.below(clusters)));
      cams[i] = static_cast<int>(rng.below(4));
      feats.push_back(random_unit(rng, d));
      samples.push_back({static_cast<double>(i)});
    }
    const auto a = assign_and_summarize(feats, cams, labels);
    const std::size_t n_new = rng.below(clusters + 3);
    const auto picked = select_new(a, samples, feats, cams, n_new, 0, 1, 0);

    // Exhaustive: rank clusters by (size desc, id asc); best member by cosine, first index on ties.
    std::vector<std::size_t> order(clusters);
    for (std::size_t c = 0; c < clusters; ++c) order[c] = c;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a.cluster_sizes[x] > a.cluster_sizes[y]; });
    bool ok = picked.size() == std::min(n_new, clusters);
    for (std::size_t r = 0; ok && r < picked.size(); ++r) {
      const std::size_t c = order[r];
      double best = -2.0;
      std::size_t arg = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != static_cast<int>(c)) continue;
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += feats[i][k] * a.prototypes[c][k];
        if (s > best) {
          best = s;
          arg = i;
        }
      }
      ok = picked[r].sample == samples[arg] && picked[r].prototype == a.prototypes[c] &&
           picked[r].source_cluster_size == a.cluster_sizes[c];
    }
    select_ok += ok ? 1 : 0;
  }
  return {quota_ok == 1000 && worked && select_ok == 100,
          "quotas " + std::to_string(quota_ok) + "/1000, (300,500,512)->" + (worked ? "(192,320)" : "wrong") +
              ", select_new " + std::to_string(select_ok) + "/100"};
}

Outcome ema_closed_form() {
  Rng rng(11);
  const Layout layout{{8, 16, 16, 4}};
  const auto m0 = EncoderParams::init(layout, rng);
  auto theta = EncoderParams::init(layout, rng);
  for (auto& v : theta.values()) v += rng.normal();
  const double alpha = 0.999;
  auto m = m0;
  for (int t = 0; t < 1000; ++t) ema_update_inplace(m, theta, alpha);
  const double at = std::pow(alpha, 1000.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i)
    worst = std::max(worst, std::abs(m.values()[i] - (at * m0.values()[i] + (1.0 - at) * theta.values()[i])));
  return {worst <= 1e-9, "1000 steps, alpha 0.999, max abs diff " + fmt("%.1e", worst)};
}

struct AblationRun {
  double self = 0.0, cross = 0.0, backward = 0.0, secs = 0.0;
};

/// First-learned domain after the final step, for one ablation row.
AblationRun run_ablation(const Benchmark& bench, const RunConfig& base, Ablation a) {
  RunConfig cfg = base;
  cfg.ablation = a;
  const auto t0 = std::chrono::steady_clock::now();
  const auto seen = bench.ordered(cfg.resolved_order());
  const auto res = run_sequence(seen, bench.unseen, cfg.resolved_pipeline());
  AblationRun r;
  r.secs = seconds_since(t0);
  const std::size_t last = seen.size();
  const int d1 = seen.front().test.domain_id;
  r.self = res.metric(last, d1, "self")->map;
  r.cross = res.metric(last, d1, "cross")->map;
  for (const auto& c : res.compat)
    if (c.step == last && c.domain_id == d1) r.backward = c.backward;
  return r;
}

RunConfig acceptance_config() {
  RunConfig cfg;
  cfg.seed = 1;
  return cfg;
}

int run_cli(const std::string& cli, const std::string& args) {
  const std::string cmd = cli + " " + args + " >/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome determinism(const std::string& cli) {
  if (cli.empty()) return {false, "no CLI path given"};
  const fs::path dir = fs::temp_directory_path() / ("lifereid_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  const std::string common = "train --seed " + std::to_string(acceptance_config().seed) + " --out ";
  const int a = run_cli(cli, common + (dir / "a").string());
  const int b = run_cli(cli, common + (dir / "b").string());
  Outcome o;
  if (a != 0 || b != 0) {
    o = {false, "train exited with " + std::to_string(a) + "/" + std::to_string(b)};
  } else {
    const std::string ck = "checkpoints/" + checkpoint_name(acceptance_config().data.n_seen);
    const std::string ma = slurp(dir / "a/metrics.csv"), ca = slurp(dir / "a" / ck);
    const bool same_metrics = !ma.empty() && ma == slurp(dir / "b/metrics.csv");
    const bool same_ck = !ca.empty() && ca == slurp(dir / "b" / ck);
    o = {same_metrics && same_ck, std::string("metrics.csv ") + (same_metrics ? "identical" : "differs") +
                                      ", final checkpoint " + (same_ck ? "identical" : "differs")};
  }
  fs::remove_all(dir);
  return o;
}

Outcome reductions() {
  // Step 1 with an empty buffer: full configuration vs adaptation losses only.
  BenchmarkConfig b;
  b.shape.d_in = 16;
  b.shape.signal_dim = 8;
  b.shape.n_train_ids = 24;
  b.shape.n_test_ids = 8;
  b.shape.n_cameras = 3;
  b.shape.samples_per_id_per_camera = 2;
  b.n_seen = 1;
  b.n_unseen = 0;
  const auto bench = generate_benchmark(b, 4);
  PipelineConfig full;
  full.widths = {16, 32, 16};
  full.epochs_per_step = 3;
  full.iterations_per_epoch = 6;
  full.rerank.k1 = 6;
  full.rerank.k2 = 3;
  full.seed = 9;
  const auto adapt = apply_ablation(full, Ablation::PaIa);
  PipelineState sa = PipelineState::initial(full), sb = PipelineState::initial(adapt);
  run_step(bench.seen[0].train, sa, full);
  run_step(bench.seen[0].train, sb, adapt);
  const bool bitwise = sa.online == sb.online && sa.momentum == sb.momentum && sa.buffer == sb.buffer &&
                       sa.rng.state() == sb.rng.state() && sa.online != PipelineState::initial(full).online;

  // Zero auxiliary weights leave only the prototype term.
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    Rng rng(derive_seed(31, t));
    auto p = GradProblem::random(rng);
    p.weights.lambda_ia = p.weights.lambda_ps = p.weights.lambda_is = p.weights.lambda_cam = 0.0;
    const auto overall = p.evaluate(LossKind::Overall), pa = p.evaluate(LossKind::Pa);
    worst = std::max(worst, std::abs(overall.value - pa.value));
    for (std::size_t i = 0; i < pa.current_grads.size(); ++i)
      for (std::size_t k = 0; k < pa.current_grads[i].size(); ++k)
        worst = std::max(worst, std::abs(overall.current_grads[i][k] - pa.current_grads[i][k]));
    for (const auto& g : overall.buffer_grads)
      for (double v : g) worst = std::max(worst, std::abs(v));
  }
  return {bitwise && worst <= 1e-12, std::string("step-1 state ") + (bitwise ? "bitwise identical" : "differs") +
                                         ", zero-weight overall vs pa max diff " + fmt("%.1e", worst)};
}

Outcome properties() {
  Rng rng(99);
  // KL divergence.
  double kl_min = 1e300, kl_self = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + rng.below(20);
    std::vector<double> a(n), b(n);
    for (auto& x : a) x = rng.normal(0.0, 3.0);
    for (auto& x : b) x = rng.normal(0.0, 3.0);
    const auto p = softmax_logits(a), q = softmax_logits(b);
    kl_min = std::min(kl_min, kl_divergence(p, q));
    kl_self = std::max(kl_self, std::abs(kl_divergence(p, p)));
  }
  const bool kl_ok = kl_min >= 0.0 && kl_self == 0.0;

  // Tangency of every feature gradient.
  double tangent = 0.0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    Rng r(derive_seed(57, t));
    const auto p = GradProblem::random(r);
    for (LossKind k : kAllLosses) {
      const auto e = p.evaluate(k);
      auto check = [&](const std::vector<std::vector<double>>& grads, const std::vector<FeatureVector>& feats) {
        for (std::size_t i = 0; i < grads.size(); ++i) tangent = std::max(tangent, std::abs(dot(grads[i], feats[i])));
      };
      check(e.current_grads, p.current.online_feats);
      check(e.buffer_grads, p.buffer.online_feats);
    }
  }

  // Retrieval under a global rotation.
  double rot = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t d = 3 + rng.below(8);
    std::vector<FeatureVector> q, g;
    std::vector<int> qid, qcam, gid, gcam;
    for (int id = 0; id < 15; ++id) {
      const auto c = random_unit(rng, d);
      for (int cam = 0; cam < 3; ++cam) {
        auto jitter = [&] {
          std::vector<double> v(c.begin(), c.end());
          for (auto& x : v) x += rng.normal(0.0, 0.6);
          return normalize(v);
        };
        q.push_back(jitter());
        qid.push_back(id);
        qcam.push_back(cam);
        g.push_back(jitter());
        gid.push_back(id);
        gcam.push_back((cam + 1) % 3);
      }
    }
    const auto m = random_rotation(d, rng);
    auto rotate = [&](const FeatureVector& f) {
      std::vector<double> out(d, 0.0);
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t k = 0; k < d; ++k) out[r] += m[r * d + k] * f[k];
      return normalize(out);
    };
    std::vector<FeatureVector> qr, gr;
    for (const auto& f : q) qr.push_back(rotate(f));
    for (const auto& f : g) gr.push_back(rotate(f));
    const auto a = retrieval(q, qid, qcam, g, gid, gcam), b = retrieval(qr, qid, qcam, gr, gid, gcam);
    rot = std::max({rot, std::abs(a.map - b.map), std::abs(a.rank1 - b.rank1)});
  }
  return {kl_ok && tangent <= 1e-9 && rot <= 1e-9, "KL min " + fmt("%.1e", kl_min) + ", KL(p,p) " +
                                                       fmt("%.0e", kl_self) + ", max |<grad,f>| " + fmt("%.1e", tangent) +
                                                       ", rotation max diff " + fmt("%.1e", rot)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  bool all = true;
  auto report = [&](int n, const char* name, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::printf("criterion %2d %s  %s: %s\n", n, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "gradient correctness", gradients);
  report(2, "metric oracle", metric_oracle);
  report(3, "clustering oracles", clustering_oracles);
  report(4, "buffer arithmetic", buffer_arithmetic);
  report(5, "EMA closed form", ema_closed_form);

  // Criteria 6 and 7 share the ablation runs on the default benchmark.
  const RunConfig base = acceptance_config();
  AblationRun baseline, ps, is, full;
  std::string run_error;
  double total_secs = 0.0;
  try {
    const Benchmark bench = generate_benchmark(base.data, base.seed);
    baseline = run_ablation(bench, base, Ablation::PaIa);
    ps = run_ablation(bench, base, Ablation::PaIaPs);
    is = run_ablation(bench, base, Ablation::PaIaIs);
    full = run_ablation(bench, base, Ablation::Full);
    total_secs = baseline.secs + ps.secs + is.secs + full.secs;
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  report(6, "anti-forgetting", [&]() -> Outcome {
    if (!run_error.empty()) return {false, "exception: " + run_error};
    const bool margin = full.self - baseline.self >= 10.0;
    const bool between = baseline.self < ps.self && ps.self < full.self && baseline.self < is.self && is.self < full.self;
    return {margin && between && total_secs < 300.0,
            "domain-1 mAP after last step: baseline " + fmt("%.1f", baseline.self) + ", ps-only " + fmt("%.1f", ps.self) +
                ", is-only " + fmt("%.1f", is.self) + ", full " + fmt("%.1f", full.self) + " (" +
                fmt("%.0f s", total_secs) + ")"};
  });
  report(7, "backward compatibility", [&]() -> Outcome {
    if (!run_error.empty()) return {false, "exception: " + run_error};
    const double gap_full = std::abs(full.self - full.cross), gap_base = std::abs(baseline.self - baseline.cross);
    return {gap_full < gap_base && gap_base > 10.0 && full.backward > baseline.backward,
            "self/cross gap full " + fmt("%.1f", gap_full) + " vs baseline " + fmt("%.1f", gap_base) +
                ", triplet preservation full " + fmt("%.3f", full.backward) + " vs baseline " +
                fmt("%.3f", baseline.backward)};
  });
  report(8, "reduction identities", reductions);
  report(9, "determinism", [&] { return determinism(cli); });
  report(10, "property suites", properties);

  std::printf("%s\n", all ? "all criteria PASS" : "some criteria FAIL");
  return all ? 0 : 1;
}
