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

// Subcommand bodies behind the cs3 executable. Each returns an exit code:
// 0 success, 1 validation failure, 2 runtime divergence.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "cs3/embedding_server.hpp"
#include "cs3/experiment.hpp"
#include "cs3/gradcheck.hpp"
#include "cs3/online_trainer.hpp"
#include "cs3/snapshot.hpp"
#include "cs3/synth.hpp"
#include "json.hpp"

namespace cs3 {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitDivergence = 2;

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Read once from CS3_LOG_LEVEL (error|warn|info|debug); default warn.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* v = std::getenv("CS3_LOG_LEVEL");
    if (!v) return LogLevel::Warn;
    const std::string s(v);
    if (s == "error") return LogLevel::Error;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
  }();
  return level;
}

inline void log(LogLevel lvl, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (lvl <= log_level())
    std::cerr << "[cs3 " << names[static_cast<int>(lvl)] << "] " << msg << '\n';
}

namespace detail {

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory '" + dir + "': " + ec.message());
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

inline Stream load_dataset(ExperimentConfig& x, const std::string& override_path = {}) {
  const std::string path = override_path.empty() ? x.dataset : override_path;
  if (path.empty()) throw ConfigError("experiment.dataset", "no dataset path given");
  if (!std::filesystem::exists(path))
    throw ConfigError("experiment.dataset", "file '" + path + "' does not exist");
  Stream s = read_stream_csv(path);
  bind_schema(x.trainer, s.schema, x.field_dim);
  return s;
}

inline std::string snapshot_name(std::uint64_t step) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "snapshot_%012llu.cs3s", static_cast<unsigned long long>(step));
  return buf;
}

}  // namespace detail

inline int cmd_synth(const SynthSpec& spec, const std::string& out_path) {
  const SynthStream s = generate_stream(spec);
  write_stream_csv(out_path, s.stream);
  log(LogLevel::Info, "wrote " + std::to_string(s.stream.events.size()) + " events to " + out_path);
  return kExitOk;
}

struct TrainSummary {
  std::uint64_t steps = 0;
  std::uint64_t skipped = 0;
  MetricReport prequential;
  std::string final_snapshot;
};

// Writes periodic snapshots, final.cs3s and timeline.jsonl under output_dir.
inline TrainSummary train_experiment(ExperimentConfig x) {
  Stream s = detail::load_dataset(x);
  detail::ensure_dir(x.output_dir);
  const std::filesystem::path dir(x.output_dir);
  Trainer tr(x.trainer);
  MetricsTimeline tl = tr.run_stream(
      std::move(s.events), [&](std::uint64_t step, const std::vector<std::uint8_t>& bytes) {
        write_file((dir / detail::snapshot_name(step)).string(), bytes);
      });
  TrainSummary sum;
  sum.steps = tr.global_step();
  sum.skipped = tr.skipped();
  sum.prequential = tl.overall;
  sum.final_snapshot = (dir / "final.cs3s").string();
  write_file(sum.final_snapshot, tr.export_snapshot());
  detail::write_text((dir / "timeline.jsonl").string(),
                     to_jsonl(tl, x.trainer.stream.record_wall_time));
  return sum;
}

inline nlohmann::ordered_json to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  if (r.auc) {
    j["auc"] = *r.auc;
  } else {
    j["auc"] = "undefined";
  }
  j["logloss"] = r.logloss;
  j["count"] = r.count;
  j["positives"] = r.positives;
  return j;
}

inline int cmd_train(const ExperimentConfig& x) {
  const TrainSummary s = train_experiment(x);
  nlohmann::ordered_json j;
  j["steps"] = s.steps;
  j["skipped"] = s.skipped;
  j["prequential"] = to_json(s.prequential);
  j["snapshot"] = s.final_snapshot;
  std::cout << j.dump() << '\n';
  return s.skipped > 0 ? kExitDivergence : kExitOk;
}

inline int cmd_eval(ExperimentConfig x, const std::string& snapshot_path,
                    const std::string& stream_path, EvalMode mode) {
  Stream s = detail::load_dataset(x, stream_path);
  if (!std::filesystem::exists(snapshot_path))
    throw ConfigError("snapshot", "file '" + snapshot_path + "' does not exist");
  const ModelSnapshot snap = snapshot_import(read_file(snapshot_path));
  const EvalOutcome r = evaluate_stream(x.trainer, std::move(s.events), snap, mode);
  std::cout << to_json(r.metrics).dump() << '\n';
  return r.metrics.auc ? kExitOk : kExitDivergence;
}

inline int cmd_gradcheck(ExperimentConfig x, const GradcheckOptions& o) {
  if (x.dataset.empty()) {
    // Without a dataset, check against the synthetic generator's schema.
    bind_schema(x.trainer, synth_schema(x.synth), x.field_dim);
  } else {
    detail::load_dataset(x);
  }
  const GradcheckReport r = run_gradcheck(x.trainer.resolved_model(), x.trainer.resolved_cascade(), o);
  nlohmann::ordered_json j;
  j["instances"] = r.instances;
  j["dense"] = r.dense;
  j["cas"] = r.cas;
  j["two_tower"] = r.model;
  j["cascade"] = r.cascade;
  std::cout << j.dump() << '\n';
  return r.worst() < 1e-4 ? kExitOk : kExitDivergence;
}

inline int cmd_embsvr(const ServerOptions& opts) {
  EmbeddingServer server(opts);
  server.start();
  std::cout << "listening " << server.address() << std::endl;
  server.wait();
  return kExitOk;
}

inline int cmd_ablate(ExperimentConfig x) {
  Stream s = detail::load_dataset(x);
  const AblationResult a = run_ablation(x, std::move(s.events));
  detail::ensure_dir(x.output_dir);
  const std::filesystem::path dir(x.output_dir);
  detail::write_text((dir / "ablation.json").string(), to_json(a).dump(2) + "\n");
  const std::string table = format_table(a);
  detail::write_text((dir / "ablation.txt").string(), table);
  std::cout << table;
  return a.any_diverged ? kExitDivergence : kExitOk;
}

}  // namespace cs3
