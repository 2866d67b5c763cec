#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lifereid/core_numeric.hpp"
#include "lifereid/error.hpp"
#include "lifereid/rng.hpp"

namespace lifereid {

enum class Split { Train, Query, Gallery };

constexpr std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Query: return "query";
    case Split::Gallery: return "gallery";
  }
  return "train";
}

struct Sample {
  std::vector<double> input;
  int domain_id = 0;
  int identity_id = 0;
  int camera_id = 0;
  Split split = Split::Train;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Identity ids are domain_id * kIdentityStride + local index, so identity
/// sets of different domains never intersect. Test ids follow train ids.
inline constexpr int kIdentityStride = 100000;

/// Generator parameters for one domain. An identity's anchor u lives on the
/// unit sphere of the first `signal_dim` coordinates; a sample is
///   transform * (u + camera_offset[c] + noise) + bias
/// with isotropic Gaussian noise over all d_in coordinates.
struct DomainSpec {
  int domain_id = 0;
  std::size_t d_in = 64;
  std::size_t signal_dim = 24;
  std::size_t n_train_ids = 100;
  std::size_t n_test_ids = 50;
  std::size_t n_cameras = 4;
  std::size_t samples_per_id_per_camera = 4;
  std::vector<double> transform;                  // d_in x d_in, row-major
  std::vector<double> bias;                       // d_in
  std::vector<std::vector<double>> camera_offsets;  // n_cameras x d_in
  double noise_sigma = 0.12;

  void validate() const {
    if (d_in == 0 || signal_dim == 0 || signal_dim > d_in) throw Error(ErrorCode::InvalidSpec, "bad d_in/signal_dim");
    if (n_cameras < 2) throw Error(ErrorCode::InvalidSpec, "need at least two cameras for query/gallery splits");
    if (samples_per_id_per_camera == 0) throw Error(ErrorCode::InvalidSpec, "samples_per_id_per_camera must be positive");
    if (n_train_ids + n_test_ids == 0) throw Error(ErrorCode::InvalidSpec, "domain has no identities");
    if (n_train_ids + n_test_ids >= static_cast<std::size_t>(kIdentityStride))
      throw Error(ErrorCode::InvalidSpec, "too many identities per domain");
    if (transform.size() != d_in * d_in || bias.size() != d_in)
      throw Error(ErrorCode::InvalidSpec, "transform/bias shape does not match d_in");
    if (camera_offsets.size() != n_cameras) throw Error(ErrorCode::InvalidSpec, "one camera offset per camera required");
    for (const auto& c : camera_offsets)
      if (c.size() != d_in) throw Error(ErrorCode::InvalidSpec, "camera offset length must equal d_in");
    if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidSpec, "noise_sigma must be non-negative");
  }
};

/// Knobs used to draw a DomainSpec's random geometry.
struct DomainShape {
  std::size_t d_in = 64;
  std::size_t signal_dim = 24;
  std::size_t n_train_ids = 100;
  std::size_t n_test_ids = 50;
  std::size_t n_cameras = 4;
  std::size_t samples_per_id_per_camera = 4;
  double noise_sigma = 0.12;
  double camera_offset_norm = 0.3;
  double bias_sigma = 0.05;
};

/// Haar-random rotation via Gram-Schmidt on a Gaussian matrix (row-major).
inline std::vector<double> random_rotation(std::size_t d, Rng& rng) {
  std::vector<double> q(d * d);
  for (auto& v : q) v = rng.normal();
  for (std::size_t r = 0; r < d; ++r) {
    double* row = q.data() + r * d;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t p = 0; p < r; ++p) {
        const double* prev = q.data() + p * d;
        double proj = 0.0;
        for (std::size_t k = 0; k < d; ++k) proj += row[k] * prev[k];
        for (std::size_t k = 0; k < d; ++k) row[k] -= proj * prev[k];
      }
    }
    double n = 0.0;
    for (std::size_t k = 0; k < d; ++k) n += row[k] * row[k];
    n = std::sqrt(n);
    for (std::size_t k = 0; k < d; ++k) row[k] /= n;
  }
  return q;
}

inline std::vector<double> random_unit(std::size_t d, Rng& rng) {
  std::vector<double> v(d);
  double n = 0.0;
  do {
    n = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      n += x * x;
    }
  } while (n < 1e-24);
  n = std::sqrt(n);
  for (auto& x : v) x /= n;
  return v;
}

/// Draws rotation, bias and camera offsets for a domain, in that order, from
/// an Rng seeded with derive_seed(seed, domain_id).
inline DomainSpec make_domain_spec(int domain_id, const DomainShape& shape, std::uint64_t master_seed) {
  Rng rng(derive_seed(master_seed, static_cast<std::uint64_t>(domain_id)) ^ 0xD0A1ULL);
  DomainSpec s;
  s.domain_id = domain_id;
  s.d_in = shape.d_in;
  s.signal_dim = shape.signal_dim;
  s.n_train_ids = shape.n_train_ids;
  s.n_test_ids = shape.n_test_ids;
  s.n_cameras = shape.n_cameras;
  s.samples_per_id_per_camera = shape.samples_per_id_per_camera;
  s.noise_sigma = shape.noise_sigma;
  s.transform = random_rotation(shape.d_in, rng);
  s.bias.resize(shape.d_in);
  for (auto& b : s.bias) b = rng.normal(0.0, shape.bias_sigma);
  for (std::size_t c = 0; c < shape.n_cameras; ++c) {
    auto off = random_unit(shape.d_in, rng);
    for (auto& x : off) x *= shape.camera_offset_norm;
    s.camera_offsets.push_back(std::move(off));
  }
  s.validate();
  return s;
}

/// Identity-major, camera-minor sample stream. For each identity: draw u,
/// then for each camera and repetition draw noise and emit a sample. Test
/// identities put their first sample of each camera in the query split and
/// the rest in the gallery.
inline std::vector<Sample> generate_domain(const DomainSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const std::size_t d = spec.d_in;
  const std::size_t n_ids = spec.n_train_ids + spec.n_test_ids;
  std::vector<Sample> out;
  out.reserve(n_ids * spec.n_cameras * spec.samples_per_id_per_camera);
  std::vector<double> latent(d), x(d);
  for (std::size_t id = 0; id < n_ids; ++id) {
    const bool is_test = id >= spec.n_train_ids;
    const auto u_sig = random_unit(spec.signal_dim, rng);
    for (std::size_t cam = 0; cam < spec.n_cameras; ++cam) {
      for (std::size_t rep = 0; rep < spec.samples_per_id_per_camera; ++rep) {
        for (std::size_t k = 0; k < d; ++k) {
          const double u = k < spec.signal_dim ? u_sig[k] : 0.0;
          latent[k] = u + spec.camera_offsets[cam][k] + spec.noise_sigma * rng.normal();
        }
        for (std::size_t r = 0; r < d; ++r) {
          double s = spec.bias[r];
          const double* row = spec.transform.data() + r * d;
          for (std::size_t k = 0; k < d; ++k) s += row[k] * latent[k];
          x[r] = s;
        }
        Sample smp;
        smp.input = x;
        smp.domain_id = spec.domain_id;
        smp.identity_id = spec.domain_id * kIdentityStride + static_cast<int>(id);
        smp.camera_id = static_cast<int>(cam);
        smp.split = !is_test ? Split::Train : (rep == 0 ? Split::Query : Split::Gallery);
        out.push_back(std::move(smp));
      }
    }
  }
  return out;
}

/// A full benchmark: domains 0..n_seen-1 are trained on, the next n_unseen
/// are only evaluated.
struct BenchmarkConfig {
  DomainShape shape;
  std::size_t n_seen = 3;
  std::size_t n_unseen = 2;
  std::size_t num_domains() const noexcept { return n_seen + n_unseen; }
};

/// Domain d uses make_domain_spec(d, shape, seed) and sample stream
/// derive_seed(seed, d).
inline std::vector<Sample> generate_benchmark_domain(const BenchmarkConfig& cfg, int domain_id, std::uint64_t seed) {
  const auto spec = make_domain_spec(domain_id, cfg.shape, seed);
  return generate_domain(spec, derive_seed(seed, static_cast<std::uint64_t>(domain_id)));
}

enum class AugmentMode { Weak, Strong };

struct AugmentConfig {
  double sigma_aug = 0.1;
  double p_mask = 0.1;
};

/// Weak views are the input itself. Strong views add N(0, sigma_aug^2) noise
/// and then zero each coordinate with probability p_mask.
inline std::vector<double> augment(std::span<const double> x, AugmentMode mode, const AugmentConfig& cfg, Rng& rng) {
  std::vector<double> out(x.begin(), x.end());
  if (mode == AugmentMode::Weak) return out;
  for (auto& v : out) {
    if (cfg.sigma_aug > 0.0) v += cfg.sigma_aug * rng.normal();
    if (cfg.p_mask > 0.0 && rng.bernoulli(cfg.p_mask)) v = 0.0;
  }
  return out;
}

inline std::vector<Sample> filter_split(const std::vector<Sample>& samples, Split split) {
  std::vector<Sample> out;
  for (const auto& s : samples)
    if (s.split == split) out.push_back(s);
  return out;
}

// ---------------------------------------------------------------------------
// CSV: domain_id,split,identity_id,camera_id,f0,...,f{d-1}

inline std::string csv_header(std::size_t d_in) {
  std::string h = "domain_id,split,identity_id,camera_id";
  for (std::size_t k = 0; k < d_in; ++k) h += ",f" + std::to_string(k);
  return h;
}

inline void write_dataset(const std::vector<Sample>& samples, std::ostream& os) {
  const std::size_t d = samples.empty() ? 0 : samples.front().input.size();
  os << csv_header(d) << '\n';
  char buf[40];
  for (const auto& s : samples) {
    if (s.input.size() != d) throw Error(ErrorCode::DimensionMismatch, "samples differ in input dimension");
    os << s.domain_id << ',' << to_string(s.split) << ',' << s.identity_id << ',' << s.camera_id;
    for (double v : s.input) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << ',' << buf;
    }
    os << '\n';
  }
}

inline void write_dataset(const std::vector<Sample>& samples, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
  write_dataset(samples, os);
  if (!os) throw Error(ErrorCode::Io, "failed writing " + path);
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> f;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      f.push_back(line.substr(start));
      break;
    }
    f.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return f;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace detail

inline std::vector<Sample> read_dataset(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorCode::HeaderMismatch, "missing header line");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto cols = detail::split_csv(line);
  if (cols.size() < 4) throw Error(ErrorCode::HeaderMismatch, "header has fewer than four columns");
  const std::size_t d = cols.size() - 4;
  if (line != csv_header(d)) throw Error(ErrorCode::HeaderMismatch, "unexpected header: " + line);

  std::vector<Sample> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    const auto bad = [&](const std::string& why) {
      return Error(ErrorCode::MalformedRow, "line " + std::to_string(lineno) + ": " + why);
    };
    if (f.size() != d + 4) throw bad("expected " + std::to_string(d + 4) + " fields, got " + std::to_string(f.size()));
    Sample s;
    if (!detail::parse_number(f[0], s.domain_id)) throw bad("domain_id");
    if (f[1] == "train") s.split = Split::Train;
    else if (f[1] == "query") s.split = Split::Query;
    else if (f[1] == "gallery") s.split = Split::Gallery;
    else throw bad("unknown split '" + std::string(f[1]) + "'");
    if (!detail::parse_number(f[2], s.identity_id)) throw bad("identity_id");
    if (!detail::parse_number(f[3], s.camera_id)) throw bad("camera_id");
    s.input.resize(d);
    for (std::size_t k = 0; k < d; ++k)
      if (!detail::parse_number(f[4 + k], s.input[k])) throw bad("feature f" + std::to_string(k));
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<Sample> read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + path);
  return read_dataset(is);
}

}  // namespace lifereid
