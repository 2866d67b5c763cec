#pragma once

// Dataset directory: domain_D.csv per domain plus manifest.json listing the
// seen and unseen domains, their files, and the generator settings.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lifereid/config.hpp"
#include "lifereid/error.hpp"
#include "lifereid/pipeline.hpp"
#include "lifereid/run_dir.hpp"
#include "lifereid/synth_data.hpp"

namespace lifereid {

struct Benchmark {
  std::vector<DomainData> seen;    // indexed by domain id
  std::vector<DomainData> unseen;

  /// Seen domains in training order.
  std::vector<DomainData> ordered(const std::vector<int>& order) const {
    std::vector<DomainData> out;
    for (int d : order) {
      if (d < 0 || static_cast<std::size_t>(d) >= seen.size())
        throw Error(ErrorCode::InvalidConfig, "order entry " + std::to_string(d) + " is not a seen domain");
      out.push_back(seen[static_cast<std::size_t>(d)]);
    }
    return out;
  }
};

inline std::string domain_file(int domain_id) { return "domain_" + std::to_string(domain_id) + ".csv"; }

inline Benchmark generate_benchmark(const BenchmarkConfig& cfg, std::uint64_t seed) {
  Benchmark b;
  for (std::size_t d = 0; d < cfg.num_domains(); ++d) {
    auto dd = DomainData::from_samples(generate_benchmark_domain(cfg, static_cast<int>(d), seed));
    (d < cfg.n_seen ? b.seen : b.unseen).push_back(std::move(dd));
  }
  return b;
}

inline void write_dataset_dir(const fs::path& out, const BenchmarkConfig& cfg, std::uint64_t seed) {
  ensure_dir(out);
  nlohmann::ordered_json m;
  m["seed"] = seed;
  m["seen"] = nlohmann::ordered_json::array();
  m["unseen"] = nlohmann::ordered_json::array();
  m["domains"] = nlohmann::ordered_json::array();
  for (std::size_t d = 0; d < cfg.num_domains(); ++d) {
    const int id = static_cast<int>(d);
    write_dataset(generate_benchmark_domain(cfg, id, seed), (out / domain_file(id)).string());
    (d < cfg.n_seen ? m["seen"] : m["unseen"]).push_back(id);
    m["domains"].push_back({{"domain_id", id},
                            {"file", domain_file(id)},
                            {"sample_seed", derive_seed(seed, d)},
                            {"spec_seed", derive_seed(seed, d) ^ 0xD0A1ULL}});
  }
  RunConfig rc;
  rc.data = cfg;
  m["data"] = to_json(rc)["data"];
  write_text(out / "manifest.json", m.dump(2) + "\n");
}

inline Benchmark load_dataset_dir(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream is(mpath, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + mpath.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, mpath.string() + ": malformed manifest");
  }
  auto ids = [&](const char* key) {
    std::vector<int> out;
    if (!m.contains(key) || !m[key].is_array()) throw Error(ErrorCode::Io, mpath.string() + ": missing '" + key + "'");
    for (const auto& v : m[key]) {
      if (!v.is_number_integer()) throw Error(ErrorCode::Io, mpath.string() + ": non-integer domain id");
      out.push_back(v.get<int>());
    }
    return out;
  };
  Benchmark b;
  for (int d : ids("seen")) b.seen.push_back(DomainData::from_samples(read_dataset((dir / domain_file(d)).string())));
  for (int d : ids("unseen"))
    b.unseen.push_back(DomainData::from_samples(read_dataset((dir / domain_file(d)).string())));
  return b;
}

}  // namespace lifereid
