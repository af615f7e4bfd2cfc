/*
 * Copyright 2026 The CS3 Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Experiment configuration and the ablation runner.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cs3/config.hpp"
#include "cs3/online_trainer.hpp"
#include "cs3/stream_io.hpp"
#include "cs3/synth.hpp"
#include "json.hpp"

namespace cs3 {

struct ExperimentConfig {
  TrainerConfig trainer;
  std::string dataset;
  std::string output_dir = "out";
  std::vector<std::uint64_t> seeds{1};
  std::size_t field_dim = 8;  // width of every categorical embedding
  double holdout_fraction = 0.2;
  std::size_t jobs = 1;
  EvalMode holdout_mode = EvalMode::Progressive;
  SynthSpec synth;

  void validate() const {
    if (seeds.empty()) throw ConfigError("experiment.seeds", "must list at least one seed");
    if (field_dim == 0) throw ConfigError("experiment.field_dim", "must be positive");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
      throw ConfigError("experiment.holdout_fraction", "must be in (0,1)");
    if (jobs == 0) throw ConfigError("experiment.jobs", "must be positive");
  }
};

namespace detail {

template <typename T, typename V>
void assign_if(std::optional<V> v, T& dst) {
  if (v) dst = static_cast<T>(*v);
}

inline std::vector<std::size_t> to_sizes(const std::vector<std::uint64_t>& v) {
  return {v.begin(), v.end()};
}

inline void read_tower(const ConfigFile& f, const std::string& sec, TowerConfig& t) {
  if (auto v = f.get_uint_list(sec + ".hidden_dims")) t.hidden_dims = to_sizes(*v);
  if (auto v = f.get_string(sec + ".activation")) {
    try {
      t.activation = parse_activation(*v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(sec + ".activation", e.what());
    }
  }
  assign_if(f.get_uint(sec + ".embedding_dim"), t.embedding_dim);
  assign_if(f.get_int(sec + ".cas_cycles"), t.cas_cycles);
  assign_if(f.get_uint(sec + ".hash_modulus"), t.hash_modulus);
  assign_if(f.get_real(sec + ".init_scale"), t.embedding_init_scale);
  if (auto v = f.get_bool_list(sec + ".cas_layers")) t.cas_enabled = *v;
}

inline StoragePrecision read_precision(const ConfigFile& f, const std::string& key,
                                       StoragePrecision dflt) {
  auto v = f.get_string(key);
  if (!v) return dflt;
  if (*v == "f64") return StoragePrecision::Double;
  if (*v == "f32") return StoragePrecision::Single;
  throw ConfigError(key, "expected f32 or f64, got '" + *v + "'");
}

// Re-throws validation failures as ConfigError naming the section.
template <typename F>
void named(const std::string& field, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(field, e.what());
  }
}

}  // namespace detail

inline ExperimentConfig experiment_from_config(const ConfigFile& f) {
  ExperimentConfig x;
  x.trainer.toggles = {true, true, true};

  if (auto v = f.get_string("experiment.dataset")) x.dataset = *v;
  if (auto v = f.get_string("experiment.output_dir")) x.output_dir = *v;
  if (auto v = f.get_uint_list("experiment.seeds")) x.seeds = *v;
  detail::assign_if(f.get_uint("experiment.field_dim"), x.field_dim);
  detail::assign_if(f.get_real("experiment.holdout_fraction"), x.holdout_fraction);
  detail::assign_if(f.get_uint("experiment.jobs"), x.jobs);
  if (auto v = f.get_string("experiment.holdout_mode")) {
    if (*v == "frozen") {
      x.holdout_mode = EvalMode::Frozen;
    } else if (*v == "progressive") {
      x.holdout_mode = EvalMode::Progressive;
    } else if (*v == "cascade_online") {
      x.holdout_mode = EvalMode::CascadeOnline;
    } else {
      throw ConfigError("experiment.holdout_mode",
                        "expected frozen, progressive or cascade_online, got '" + *v + "'");
    }
  }

  detail::assign_if(f.get_bool("modules.cas"), x.trainer.toggles.cas);
  detail::assign_if(f.get_bool("modules.cts"), x.trainer.toggles.cts);
  detail::assign_if(f.get_bool("modules.cms"), x.trainer.toggles.cms);

  TowerConfig shared;
  detail::read_tower(f, "tower", shared);
  x.trainer.user_tower = shared;
  x.trainer.item_tower = shared;
  detail::read_tower(f, "tower.user", x.trainer.user_tower);
  detail::read_tower(f, "tower.item", x.trainer.item_tower);

  CascadeConfig& c = x.trainer.cascade;
  if (auto v = f.get_uint_list("cascade.hidden_dims")) c.hidden_dims = detail::to_sizes(*v);
  if (auto v = f.get_string("cascade.activation")) {
    detail::named("cascade.activation", [&] { c.activation = parse_activation(*v); });
  }
  detail::assign_if(f.get_uint("cascade.hash_modulus"), c.hash_modulus);
  detail::assign_if(f.get_real("cascade.init_scale"), c.embedding_init_scale);
  detail::assign_if(f.get_real("cascade.train_fraction"), x.trainer.cascade_train_fraction);

  StreamConfig& s = x.trainer.stream;
  detail::assign_if(f.get_real("stream.alpha"), s.alpha);
  detail::assign_if(f.get_real("stream.beta"), s.beta);
  detail::assign_if(f.get_uint("stream.snapshot_every"), s.snapshot_every);
  detail::assign_if(f.get_uint("stream.eval_every"), s.eval_every);
  detail::assign_if(f.get_uint("stream.seed"), s.seed);
  detail::assign_if(f.get_uint("stream.waiting_period_ms"), s.waiting_period_ms);
  detail::assign_if(f.get_uint("stream.batch_size"), s.batch_size);
  detail::assign_if(f.get_bool("stream.wall_time"), s.record_wall_time);
  if (auto v = f.get_string("stream.cms_backend")) {
    if (*v == "inprocess") {
      s.cms_backend = CmsBackendKind::InProcess;
    } else if (*v == "server") {
      s.cms_backend = CmsBackendKind::EmbeddingServer;
    } else {
      throw ConfigError("stream.cms_backend", "expected inprocess or server, got '" + *v + "'");
    }
  }
  if (auto v = f.get_string("stream.server_address")) s.server_address = *v;
  x.trainer.cts_precision =
      detail::read_precision(f, "stream.cts_precision", x.trainer.cts_precision);
  x.trainer.cms_precision =
      detail::read_precision(f, "stream.cms_precision", x.trainer.cms_precision);

  OptimizerConfig& o = x.trainer.optimizer;
  if (auto v = f.get_string("optimizer.kind")) {
    if (*v == "adam") {
      o.kind = OptimizerKind::Adam;
    } else if (*v == "sgd") {
      o.kind = OptimizerKind::SGD;
    } else {
      throw ConfigError("optimizer.kind", "expected adam or sgd, got '" + *v + "'");
    }
  }
  detail::assign_if(f.get_real("optimizer.learning_rate"), o.learning_rate);
  detail::assign_if(f.get_real("optimizer.sparse_learning_rate"), o.sparse_learning_rate);
  detail::assign_if(f.get_real("optimizer.beta1"), o.beta1);
  detail::assign_if(f.get_real("optimizer.beta2"), o.beta2);
  detail::assign_if(f.get_real("optimizer.epsilon"), o.epsilon);

  SynthSpec& y = x.synth;
  detail::assign_if(f.get_uint("synth.n_users"), y.n_users);
  detail::assign_if(f.get_uint("synth.n_items"), y.n_items);
  detail::assign_if(f.get_uint("synth.latent_dim"), y.latent_dim);
  detail::assign_if(f.get_real("synth.noise"), y.noise);
  detail::assign_if(f.get_real("synth.drift_rate"), y.drift_rate);
  detail::assign_if(f.get_real("synth.positive_rate"), y.positive_rate);
  detail::assign_if(f.get_uint("synth.length"), y.length);
  detail::assign_if(f.get_uint("synth.seed"), y.seed);
  detail::assign_if(f.get_real("synth.signal_scale"), y.signal_scale);
  detail::assign_if(f.get_uint("synth.dense_features"), y.dense_features);
  detail::assign_if(f.get_real("synth.dense_noise"), y.dense_noise);
  detail::assign_if(f.get_uint("synth.segment_bits"), y.segment_bits);
  detail::assign_if(f.get_real("synth.arrival_span"), y.arrival_span);
  detail::assign_if(f.get_uint("synth.max_label_delay"), y.max_label_delay);

  f.reject_unused();
  x.validate();
  // Features come from the dataset header later; validate the rest now.
  for (const auto& [name, tower] : {std::pair{"tower.user", x.trainer.user_tower},
                                    std::pair{"tower.item", x.trainer.item_tower}}) {
    TowerConfig probe = tower;
    if (probe.features.width() == 0) probe.features.dense_count = 1;
    detail::named(name, [&] { probe.validate(); });
  }
  detail::named("stream", [&] { x.trainer.stream.validate(); });
  detail::named("optimizer", [&] { x.trainer.optimizer.validate(); });
  detail::named("synth", [&] { x.synth.validate(); });
  return x;
}

inline ExperimentConfig load_experiment(const std::string& path) {
  return experiment_from_config(ConfigFile::load(path));
}

// Fills the tower feature specs from a stream header.
inline void bind_schema(TrainerConfig& t, const StreamSchema& s, std::size_t field_dim) {
  auto spec = [&](const std::vector<std::string>& cats, const std::vector<std::string>& dense) {
    FeatureSpec f;
    for (const auto& c : cats) f.categorical.push_back({c, field_dim});
    f.dense_count = dense.size();
    return f;
  };
  t.user_tower.features = spec(s.user_categorical, s.user_dense);
  t.item_tower.features = spec(s.item_categorical, s.item_dense);
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationVariant {
  std::string name;
  ModuleToggles toggles;
};

// The five rows, each masked by the modules the config allows.
inline std::vector<AblationVariant> ablation_variants(const ModuleToggles& allowed) {
  auto mask = [&](ModuleToggles t) {
    return ModuleToggles{t.cas && allowed.cas, t.cts && allowed.cts, t.cms && allowed.cms};
  };
  return {{"base", mask({false, false, false})},
          {"+CAS", mask({true, false, false})},
          {"+CTS", mask({false, true, false})},
          {"+CMS", mask({false, false, true})},
          {"+CS3", mask({true, true, true})}};
}

struct RunResult {
  std::string variant;
  std::uint64_t seed = 0;
  MetricReport heldout;
  MetricReport prequential;
  std::uint64_t skipped = 0;
  double seconds = 0.0;

  bool diverged() const {
    return skipped > 0 || !heldout.auc || !std::isfinite(heldout.logloss);
  }
};

// Trains on the first (1 - holdout) of the sorted stream, then scores the rest
// with frozen retriever parameters under `mode`.
inline RunResult run_holdout(TrainerConfig cfg, const std::string& variant,
                             const ModuleToggles& toggles, std::uint64_t seed,
                             const std::vector<InteractionEvent>& sorted, double holdout,
                             EvalMode mode = EvalMode::Progressive) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.toggles = toggles;
  cfg.stream.seed = seed;
  cfg.stream.record_wall_time = false;
  const auto split = static_cast<std::ptrdiff_t>(
      std::llround((1.0 - holdout) * static_cast<double>(sorted.size())));
  Trainer tr(cfg);
  MetricsTimeline tl = tr.run_stream({sorted.begin(), sorted.begin() + split});
  RunResult r;
  r.variant = variant;
  r.seed = seed;
  r.prequential = tl.overall;
  r.heldout = tr.evaluate({sorted.begin() + split, sorted.end()}, mode);
  r.skipped = tr.skipped();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

struct AblationRow {
  std::string variant;
  ModuleToggles toggles;
  std::size_t runs = 0;
  double mean_auc = 0.0;
  double stderr_auc = 0.0;
  double mean_logloss = 0.0;
  double stderr_logloss = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<RunResult> runs;  // sorted by (variant order, seed)
  bool any_diverged = false;

  const AblationRow* row(const std::string& name) const {
    for (const auto& r : rows)
      if (r.variant == name) return &r;
    return nullptr;
  }
};

namespace detail {

inline std::pair<double, double> mean_stderr(const std::vector<double>& xs) {
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return {m, sd / std::sqrt(static_cast<double>(xs.size()))};
}

}  // namespace detail

inline AblationResult run_ablation(const ExperimentConfig& x, std::vector<InteractionEvent> events) {
  if (x.seeds.size() < 2) throw ConfigError("experiment.seeds", "ablation needs at least 2 seeds");
  Trainer::prepare_stream(events, x.trainer.stream.waiting_period_ms);
  TrainerConfig cfg = x.trainer;
  cfg.stream.waiting_period_ms = 0;  // already applied

  const auto variants = ablation_variants(x.trainer.toggles);
  struct Job {
    std::size_t v;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < variants.size(); ++v)
    for (std::uint64_t s : x.seeds) jobs.push_back({v, s});
  std::vector<RunResult> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());

  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&] {
    while (true) {
      std::size_t j;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next == jobs.size()) return;
        j = next++;
      }
      try {
        const auto& var = variants[jobs[j].v];
        results[j] = run_holdout(cfg, var.name, var.toggles, jobs[j].seed, events,
                                 x.holdout_fraction, x.holdout_mode);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min(x.jobs, jobs.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  AblationResult out;
  out.runs = results;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    std::vector<double> aucs, lls;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      if (jobs[j].v != v) continue;
      const RunResult& r = results[j];
      if (r.diverged()) out.any_diverged = true;
      aucs.push_back(r.heldout.auc.value_or(0.5));
      lls.push_back(r.heldout.logloss);
    }
    AblationRow row;
    row.variant = variants[v].name;
    row.toggles = variants[v].toggles;
    row.runs = aucs.size();
    std::tie(row.mean_auc, row.stderr_auc) = detail::mean_stderr(aucs);
    std::tie(row.mean_logloss, row.stderr_logloss) = detail::mean_stderr(lls);
    out.rows.push_back(row);
  }
  return out;
}

inline nlohmann::ordered_json to_json(const AblationResult& a) {
  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : a.rows) {
    j["rows"].push_back({{"variant", r.variant},
                         {"cas", r.toggles.cas},
                         {"cts", r.toggles.cts},
                         {"cms", r.toggles.cms},
                         {"runs", r.runs},
                         {"mean_auc", r.mean_auc},
                         {"stderr_auc", r.stderr_auc},
                         {"mean_logloss", r.mean_logloss},
                         {"stderr_logloss", r.stderr_logloss}});
  }
  j["runs"] = nlohmann::ordered_json::array();
  for (const auto& r : a.runs) {
    j["runs"].push_back({{"variant", r.variant},
                         {"seed", r.seed},
                         {"heldout_auc", r.heldout.auc.value_or(0.5)},
                         {"heldout_logloss", r.heldout.logloss},
                         {"prequential_auc", r.prequential.auc.value_or(0.5)},
                         {"skipped", r.skipped},
                         {"diverged", r.diverged()}});
  }
  j["diverged"] = a.any_diverged;
  return j;
}

inline std::string format_table(const AblationResult& a) {
  std::string out = "variant   runs  mean_auc   stderr     mean_logloss  stderr\n";
  char buf[160];
  for (const auto& r : a.rows) {
    std::snprintf(buf, sizeof(buf), "%-8s  %4zu  %.6f   %.6f   %.6f      %.6f\n",
                  r.variant.c_str(), r.runs, r.mean_auc, r.stderr_auc, r.mean_logloss,
                  r.stderr_logloss);
    out += buf;
  }
  return out;
}

}  // namespace cs3
