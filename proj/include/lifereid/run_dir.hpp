#pragma once

// Run directory:
//   config.json
//   metrics.csv              step,domain_id,seen,mode,mAP,rank1
//   compatibility.csv        step,domain_id,within_model,backward (optional)
//   checkpoints/step_S.bin
//   buffer/step_S.bin
//   gallery_feats/step_S_domain_D.bin

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "lifereid/config.hpp"
#include "lifereid/error.hpp"
#include "lifereid/pipeline.hpp"
#include "lifereid/serialize.hpp"

namespace lifereid {

namespace fs = std::filesystem;

inline std::string checkpoint_name(std::size_t step) { return "step_" + std::to_string(step) + ".bin"; }
inline std::string gallery_name(std::size_t step, int domain_id) {
  return "step_" + std::to_string(step) + "_domain_" + std::to_string(domain_id) + ".bin";
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

inline std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = "step,domain_id,seen,mode,mAP,rank1\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%d,%s,%s,%.6f,%.6f\n", r.step, r.domain_id, r.seen ? "seen" : "unseen",
                  r.mode.c_str(), r.map, r.rank1);
    out += buf;
  }
  return out;
}

inline std::string compatibility_csv(const std::vector<CompatRow>& rows) {
  std::string out = "step,domain_id,within_model,backward\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%d,%.6f,%.6f\n", r.step, r.domain_id, r.within_model, r.backward);
    out += buf;
  }
  return out;
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
}

inline void write_run_directory(const fs::path& out, const RunConfig& cfg, const SequenceResult& res) {
  ensure_dir(out / "checkpoints");
  ensure_dir(out / "buffer");
  ensure_dir(out / "gallery_feats");
  write_text(out / "config.json", dump_run_config(cfg));
  write_text(out / "metrics.csv", metrics_csv(res.metrics));
  if (cfg.write_compatibility) write_text(out / "compatibility.csv", compatibility_csv(res.compat));
  for (std::size_t i = 0; i < res.momentum_after_step.size(); ++i) {
    const std::size_t step = i + 1;
    save_checkpoint((out / "checkpoints" / checkpoint_name(step)).string(),
                    Checkpoint{step, res.momentum_after_step[i], res.rng_after_step[i]});
    save_buffer((out / "buffer" / checkpoint_name(step)).string(), res.buffer_after_step[i]);
  }
  for (const auto& g : res.snapshots)
    save_gallery((out / "gallery_feats" / gallery_name(g.step_extracted, g.domain_id)).string(), g);
}

/// Earliest stored gallery of `domain_id` in `dir`, i.e. the one extracted
/// right after the domain was learned.
inline std::optional<fs::path> earliest_gallery(const fs::path& dir, int domain_id) {
  std::optional<fs::path> best;
  std::size_t best_step = 0;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return best;
  const std::string suffix = "_domain_" + std::to_string(domain_id) + ".bin";
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("step_", 0) != 0 || name.size() <= suffix.size() ||
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
      continue;
    const std::string digits = name.substr(5, name.size() - 5 - suffix.size());
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) continue;
    const std::size_t step = std::stoull(digits);
    if (!best || step < best_step) {
      best = entry.path();
      best_step = step;
    }
  }
  return best;
}

}  // namespace lifereid
