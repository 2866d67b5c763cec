#pragma once

// JSON run configuration. Every field has a default; parsing rejects unknown
// keys and wrong types with the dotted path of the offending field, and
// syntax errors with line and column. to_json writes every field, so the
// file in a run directory reproduces the run on its own.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lifereid/error.hpp"
#include "lifereid/pipeline.hpp"
#include "lifereid/synth_data.hpp"

namespace lifereid {

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  BenchmarkConfig data;
  std::vector<int> order;  // seen-domain training order; empty means 0..n_seen-1
  Ablation ablation = Ablation::Full;
  PipelineConfig pipeline;
  bool write_compatibility = true;

  /// Training order with the default filled in.
  std::vector<int> resolved_order() const {
    if (!order.empty()) return order;
    std::vector<int> o(data.n_seen);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<int>(i);
    return o;
  }

  /// Pipeline settings with seed, threads and the ablation applied.
  PipelineConfig resolved_pipeline() const {
    PipelineConfig p = apply_ablation(pipeline, ablation);
    p.seed = seed;
    p.threads = threads;
    return p;
  }

  void validate() const {
    if (threads == 0) throw Error(ErrorCode::InvalidConfig, "threads must be positive");
    if (data.n_seen == 0) throw Error(ErrorCode::InvalidConfig, "data.seen_domains must be positive");
    if (data.shape.signal_dim == 0 || data.shape.signal_dim > data.shape.d_in)
      throw Error(ErrorCode::InvalidConfig, "data.signal_dim must lie in [1, d_in]");
    if (data.shape.n_cameras < 2) throw Error(ErrorCode::InvalidConfig, "data.n_cameras must be at least 2");
    if (data.shape.samples_per_id_per_camera == 0)
      throw Error(ErrorCode::InvalidConfig, "data.samples_per_id_per_camera must be positive");
    if (!(data.shape.noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidConfig, "data.noise_sigma must be >= 0");
    if (pipeline.widths.empty() || pipeline.widths.front() != data.shape.d_in)
      throw Error(ErrorCode::InvalidConfig, "model.widths must start with data.d_in");
    std::set<int> seen_ids;
    for (int d : resolved_order()) {
      if (d < 0 || static_cast<std::size_t>(d) >= data.n_seen)
        throw Error(ErrorCode::InvalidConfig, "order entry " + std::to_string(d) + " is not a seen domain");
      if (!seen_ids.insert(d).second)
        throw Error(ErrorCode::InvalidConfig, "order lists domain " + std::to_string(d) + " twice");
    }
    resolved_pipeline().validate();
  }
};

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed is read through the size_t overload");

namespace detail {

using ojson = nlohmann::ordered_json;

/// Walks one JSON object, reading known keys and remembering them so that
/// finish() can reject the rest.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorCode::InvalidConfig, where() + ": expected an object");
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    static const nlohmann::json empty = nlohmann::json::object();
    const auto it = j_.find(key);
    return Section(it == j_.end() ? empty : *it, join(key));
  }

  void read(const std::string& key, double& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number()) bad(key, "expected a number");
      out = v->get<double>();
    }
  }
  void read(const std::string& key, std::size_t& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number_unsigned()) bad(key, "expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void read(const std::string& key, bool& out) {
    if (const auto* v = find(key)) {
      if (!v->is_boolean()) bad(key, "expected true or false");
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, std::string& out) {
    if (const auto* v = find(key)) {
      if (!v->is_string()) bad(key, "expected a string");
      out = v->get<std::string>();
    }
  }
  template <class T>
  void read(const std::string& key, std::vector<T>& out) {
    if (const auto* v = find(key)) {
      if (!v->is_array()) bad(key, "expected an array");
      std::vector<T> tmp;
      for (const auto& e : *v) {
        if constexpr (std::is_unsigned_v<T>) {
          if (!e.is_number_unsigned()) bad(key, "expected non-negative integers");
        } else {
          if (!e.is_number_integer()) bad(key, "expected integers");
        }
        tmp.push_back(e.get<T>());
      }
      out = std::move(tmp);
    }
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw Error(ErrorCode::InvalidConfig, "unknown key '" + join(k) + "'");
  }

 private:
  const nlohmann::json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "config" : path_; }
  [[noreturn]] void bad(const std::string& key, const std::string& msg) const {
    throw Error(ErrorCode::InvalidConfig, join(key) + ": " + msg);
  }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text, const std::string& source = "config") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, source + ": " + detail::line_col(text, e.byte) + ": malformed JSON");
  }
  RunConfig c;
  try {
    detail::Section root(j, "");
    root.read("seed", c.seed);
    root.read("threads", c.threads);
    root.read("order", c.order);
    root.read("write_compatibility", c.write_compatibility);
    std::string abl(to_string(c.ablation));
    root.read("ablation", abl);
    const auto parsed = parse_ablation(abl);
    if (!parsed) throw Error(ErrorCode::InvalidConfig, "ablation: unknown value '" + abl + "'");
    c.ablation = *parsed;

    auto data = root.child("data");
    auto& sh = c.data.shape;
    data.read("d_in", sh.d_in);
    data.read("signal_dim", sh.signal_dim);
    data.read("n_train_ids", sh.n_train_ids);
    data.read("n_test_ids", sh.n_test_ids);
    data.read("n_cameras", sh.n_cameras);
    data.read("samples_per_id_per_camera", sh.samples_per_id_per_camera);
    data.read("noise_sigma", sh.noise_sigma);
    data.read("camera_offset_norm", sh.camera_offset_norm);
    data.read("bias_sigma", sh.bias_sigma);
    data.read("seen_domains", c.data.n_seen);
    data.read("unseen_domains", c.data.n_unseen);
    data.finish();

    auto& p = c.pipeline;
    auto model = root.child("model");
    model.read("widths", p.widths);
    model.finish();

    auto tr = root.child("training");
    tr.read("epochs_per_step", p.epochs_per_step);
    tr.read("iterations_per_epoch", p.iterations_per_epoch);
    tr.read("n_p", p.n_p);
    tr.read("n_k", p.n_k);
    tr.read("rehearsal_batch", p.rehearsal_batch);
    tr.read("ema_alpha", p.ema_alpha);
    tr.read("reset_optimizer_each_step", p.reset_optimizer_each_step);
    tr.finish();

    auto opt = root.child("optimizer");
    opt.read("base_lr", p.optimizer.base_lr);
    opt.read("warmup_epochs", p.optimizer.warmup_epochs);
    opt.read("weight_decay", p.optimizer.weight_decay);
    opt.finish();

    auto tmp = root.child("temperatures");
    tmp.read("tau_pa", p.temps.tau_pa);
    tmp.read("tau_ia", p.temps.tau_ia);
    tmp.read("tau_c", p.temps.tau_c);
    tmp.read("tau_ps", p.temps.tau_ps);
    tmp.read("tau_is", p.temps.tau_is);
    tmp.finish();

    auto ls = root.child("losses");
    ls.read("lambda_ia", p.weights.lambda_ia);
    ls.read("lambda_ps", p.weights.lambda_ps);
    ls.read("lambda_is", p.weights.lambda_is);
    ls.read("lambda_cam", p.weights.lambda_cam);
    ls.read("n_neg", p.weights.n_neg);
    ls.read("hard_positive_topk", p.weights.hard_positive_topk);
    ls.finish();

    auto cl = root.child("clustering");
    cl.read("k1", p.rerank.k1);
    cl.read("k2", p.rerank.k2);
    cl.read("lambda_rr", p.rerank.lambda_rr);
    cl.read("eps", p.rerank.eps);
    cl.read("min_pts", p.rerank.min_pts);
    cl.finish();

    auto mem = root.child("memory");
    mem.read("n_mem", p.n_mem);
    mem.finish();

    auto aug = root.child("augment");
    aug.read("sigma_aug", p.augment.sigma_aug);
    aug.read("p_mask", p.augment.p_mask);
    aug.finish();

    root.finish();
  } catch (const Error& e) {
    throw Error(e.code(), source + ": " + e.what());
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str(), path);
}

/// Fully resolved configuration; key order is fixed.
inline nlohmann::ordered_json to_json(const RunConfig& c) {
  const auto& p = c.pipeline;
  const auto& sh = c.data.shape;
  detail::ojson j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["order"] = c.resolved_order();
  j["ablation"] = std::string(to_string(c.ablation));
  j["write_compatibility"] = c.write_compatibility;
  j["data"] = {{"d_in", sh.d_in},
               {"signal_dim", sh.signal_dim},
               {"n_train_ids", sh.n_train_ids},
               {"n_test_ids", sh.n_test_ids},
               {"n_cameras", sh.n_cameras},
               {"samples_per_id_per_camera", sh.samples_per_id_per_camera},
               {"noise_sigma", sh.noise_sigma},
               {"camera_offset_norm", sh.camera_offset_norm},
               {"bias_sigma", sh.bias_sigma},
               {"seen_domains", c.data.n_seen},
               {"unseen_domains", c.data.n_unseen}};
  j["model"] = {{"widths", p.widths}};
  j["training"] = {{"epochs_per_step", p.epochs_per_step},
                   {"iterations_per_epoch", p.iterations_per_epoch},
                   {"n_p", p.n_p},
                   {"n_k", p.n_k},
                   {"rehearsal_batch", p.rehearsal_batch},
                   {"ema_alpha", p.ema_alpha},
                   {"reset_optimizer_each_step", p.reset_optimizer_each_step}};
  j["optimizer"] = {{"base_lr", p.optimizer.base_lr},
                    {"warmup_epochs", p.optimizer.warmup_epochs},
                    {"weight_decay", p.optimizer.weight_decay}};
  j["temperatures"] = {{"tau_pa", p.temps.tau_pa},
                       {"tau_ia", p.temps.tau_ia},
                       {"tau_c", p.temps.tau_c},
                       {"tau_ps", p.temps.tau_ps},
                       {"tau_is", p.temps.tau_is}};
  j["losses"] = {{"lambda_ia", p.weights.lambda_ia},
                 {"lambda_ps", p.weights.lambda_ps},
                 {"lambda_is", p.weights.lambda_is},
                 {"lambda_cam", p.weights.lambda_cam},
                 {"n_neg", p.weights.n_neg},
                 {"hard_positive_topk", p.weights.hard_positive_topk}};
  j["clustering"] = {{"k1", p.rerank.k1},
                     {"k2", p.rerank.k2},
                     {"lambda_rr", p.rerank.lambda_rr},
                     {"eps", p.rerank.eps},
                     {"min_pts", p.rerank.min_pts}};
  j["memory"] = {{"n_mem", p.n_mem}};
  j["augment"] = {{"sigma_aug", p.augment.sigma_aug}, {"p_mask", p.augment.p_mask}};
  return j;
}

inline std::string dump_run_config(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

}  // namespace lifereid
