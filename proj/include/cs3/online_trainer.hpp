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

// Streaming trainer. Events are consumed in (label_ready_time, event_time,
// user_id, item_id) order and each event is one timestep:
//
//   1. read c(t-1) and s(t-1) for the user and the item
//   2. cascade forward -> h_uv (pre-update parameters)
//   3. tower forwards conditioned on the cached vectors
//   4. losses, backward, optimizer steps for retriever and cascade
//   5. cross-vector EMA with this step's tower outputs (positives only)
//   6. cascade-vector EMA with h_uv (every event)

#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "cs3/cascade_model.hpp"
#include "cs3/embedding_server.hpp"
#include "cs3/evalkit.hpp"
#include "cs3/snapshot.hpp"
#include "cs3/stream_io.hpp"
#include "cs3/sync_caches.hpp"
#include "cs3/tower_model.hpp"
#include "json.hpp"

namespace cs3 {

enum class CmsBackendKind : std::uint8_t { InProcess = 0, EmbeddingServer = 1 };

struct StreamConfig {
  double alpha = 0.9;
  double beta = 0.9;
  std::uint64_t snapshot_every = 10000;
  std::uint64_t eval_every = 1000;
  std::uint64_t seed = 1;
  CmsBackendKind cms_backend = CmsBackendKind::InProcess;
  std::string server_address;
  std::uint64_t waiting_period_ms = 0;
  std::size_t batch_size = 1;
  bool record_wall_time = true;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("stream.alpha must be in [0,1]");
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("stream.beta must be in [0,1]");
    if (snapshot_every == 0) throw std::invalid_argument("stream.snapshot_every must be positive");
    if (eval_every == 0) throw std::invalid_argument("stream.eval_every must be positive");
    if (batch_size == 0) throw std::invalid_argument("stream.batch_size must be positive");
    if (cms_backend == CmsBackendKind::EmbeddingServer && server_address.empty())
      throw std::invalid_argument("stream.server_address is required for the embedding server backend");
  }
};

struct ModuleToggles {
  bool cas = false;
  bool cts = false;
  bool cms = false;
  bool operator==(const ModuleToggles&) const = default;
};

struct TrainerConfig {
  TowerConfig user_tower;
  TowerConfig item_tower;
  CascadeConfig cascade;
  StreamConfig stream;
  OptimizerConfig optimizer;
  ModuleToggles toggles;
  StoragePrecision cts_precision = StoragePrecision::Double;
  StoragePrecision cms_precision = StoragePrecision::Single;
  // Fraction of events the cascade trains on; h_uv is emitted for all.
  double cascade_train_fraction = 1.0;

  // Applies the module toggles to the tower configs.
  ModelConfig resolved_model() const {
    ModelConfig m{user_tower, item_tower};
    for (TowerConfig* t : {&m.user, &m.item}) {
      t->cts_dim = toggles.cts ? t->embedding_dim : 0;
      t->cms_dim = toggles.cms ? cascade.representation_dim() : 0;
      if (!toggles.cas) t->cas_enabled.assign(t->layer_count(), false);
    }
    return m;
  }

  CascadeConfig resolved_cascade() const {
    CascadeConfig c = cascade;
    c.user_features = user_tower.features;
    c.item_features = item_tower.features;
    return c;
  }

  void validate() const {
    stream.validate();
    optimizer.validate();
    resolved_model().validate();
    if (toggles.cms) resolved_cascade().validate();
    if (!(cascade_train_fraction >= 0.0 && cascade_train_fraction <= 1.0))
      throw std::invalid_argument("cascade.train_fraction must be in [0,1]");
  }
};

struct TimelinePoint {
  std::uint64_t step = 0;
  std::uint64_t window = 0;
  double loss = 0.0;
  std::optional<double> auc;
  double logloss = 0.0;
  std::uint64_t cts_reads = 0;
  std::uint64_t cts_hits = 0;
  std::uint64_t cms_reads = 0;
  std::uint64_t cms_hits = 0;
  std::uint64_t skipped = 0;
  double wall_ms = 0.0;

  bool operator==(const TimelinePoint&) const = default;
};

struct MetricsTimeline {
  std::vector<TimelinePoint> points;
  MetricReport overall;  // prequential metrics over the whole run
};

inline nlohmann::ordered_json to_json(const TimelinePoint& p, bool wall_time) {
  nlohmann::ordered_json j;
  j["step"] = p.step;
  j["window"] = p.window;
  j["loss"] = p.loss;
  if (p.auc) {
    j["running_auc"] = *p.auc;
  } else {
    j["running_auc"] = "undefined";
  }
  j["running_logloss"] = p.logloss;
  j["cache"] = {{"cts_reads", p.cts_reads},
                {"cts_hits", p.cts_hits},
                {"cms_reads", p.cms_reads},
                {"cms_hits", p.cms_hits}};
  j["skipped"] = p.skipped;
  if (wall_time) j["wall_time_ms"] = p.wall_ms;
  return j;
}

inline std::string to_jsonl(const MetricsTimeline& t, bool wall_time) {
  std::string out;
  for (const auto& p : t.points) {
    out += to_json(p, wall_time).dump();
    out += '\n';
  }
  return out;
}

// Receives (global step, snapshot bytes) at every export.
using SnapshotSink = std::function<void(std::uint64_t, const std::vector<std::uint8_t>&)>;

enum class EvalMode : std::uint8_t { Frozen = 0, Progressive = 1, CascadeOnline = 2 };

struct EventOutcome {
  double logit = 0.0;
  double prob = 0.5;
  double loss = 0.0;
  bool skipped = false;
};

class Trainer {
 public:
  explicit Trainer(TrainerConfig cfg, std::unique_ptr<CmsBackend> cms = nullptr)
      : cfg_(std::move(cfg)) {
    cfg_.validate();
    const std::uint64_t seed = cfg_.stream.seed;
    model_ = build_model(cfg_.resolved_model(), seed);
    if (cfg_.toggles.cts) {
      const std::size_t d = cfg_.user_tower.embedding_dim;
      cts_user_ = CacheStore("cts_user", d, cfg_.stream.alpha, cfg_.cts_precision);
      cts_item_ = CacheStore("cts_item", d, cfg_.stream.alpha, cfg_.cts_precision);
    }
    if (cfg_.toggles.cms) {
      cascade_ = build_cascade(cfg_.resolved_cascade(), seed);
      const std::size_t d = cfg_.cascade.representation_dim();
      if (cms) {
        if (cms->dim() != d) throw ShapeError("cms backend dim does not match cascade width");
        cms_ = std::move(cms);
      } else if (cfg_.stream.cms_backend == CmsBackendKind::EmbeddingServer) {
        cms_ = std::make_unique<RemoteCms>(cfg_.stream.server_address, d);
      } else {
        cms_ = std::make_unique<InProcessCms>(d, cfg_.stream.beta, cfg_.cms_precision);
      }
    }
  }

  const TrainerConfig& config() const { return cfg_; }
  const TwoTowerModel& model() const { return model_; }
  const CascadeNet* cascade() const { return cascade_ ? &*cascade_ : nullptr; }
  const CacheStore* cts_user() const { return cts_user_ ? &*cts_user_ : nullptr; }
  const CacheStore* cts_item() const { return cts_item_ ? &*cts_item_ : nullptr; }
  CmsBackend* cms() { return cms_.get(); }
  const CmsBackend* cms() const { return cms_.get(); }
  std::uint64_t global_step() const { return step_; }
  std::uint64_t skipped() const { return skipped_; }

  // Records 'R' for every cache read and 'W' for every cache write.
  void set_trace(std::vector<char>* trace) { trace_ = trace; }

  // One timestep. With batch_size > 1 the optimizer update is deferred to
  // the end of the batch while cache updates stay per-event.
  EventOutcome train_event(const InteractionEvent& e) {
    // ReLU maps NaN to 0, so a bad input would otherwise train silently.
    if (!all_finite(e.user.dense) || !all_finite(e.item.dense)) {
      ++step_;
      ++skipped_;
      const double nan = std::numeric_limits<double>::quiet_NaN();
      return EventOutcome{nan, nan, nan, true};
    }
    CacheReads cr = read_caches(e);

    std::optional<CascadeForward> cf;
    if (cascade_) cf = cascade_forward(*cascade_, e.user, e.item);

    ModelForward fwd = model_forward(model_, pair_inputs(e, cr));
    const BceResult bce = bce_loss(fwd.score, e.label);
    EventOutcome out{fwd.score, sigmoid(fwd.score), bce.loss, false};
    ++step_;

    std::optional<CascadeGradients> cg;
    bool finite = std::isfinite(bce.loss) && std::isfinite(fwd.score);
    ModelGradients mg;
    if (finite) {
      mg = model_backward(model_, fwd, bce.grad);
      finite = mg.finite();
    }
    if (finite && cf && trains_cascade(e)) {
      const BceResult cb = bce_loss(cf->logit, e.label);
      if (!std::isfinite(cb.loss)) {
        finite = false;
      } else {
        cg = cascade_backward(*cascade_, cf->cache, cb.grad);
        finite = cg->finite();
      }
    }
    if (!finite) {
      ++skipped_;
      out.skipped = true;
      return out;
    }
    if (cfg_.stream.batch_size == 1) {
      apply_model_gradients(model_, mg, cfg_.optimizer);
      if (cg) apply_cascade_gradients(*cascade_, *cg, cfg_.optimizer);
    } else {
      pending_model_.push_back(std::move(mg));
      if (cg) pending_cascade_.push_back(std::move(*cg));
      if (++pending_events_ == cfg_.stream.batch_size) flush_batch();
    }
    write_caches(e, fwd.u, fwd.v, cf ? &cf->h_uv : nullptr);
    return out;
  }

  // Applies any deferred batch gradients.
  void flush_batch() {
    if (!pending_model_.empty()) {
      apply_model_gradients(model_, merge(pending_model_), cfg_.optimizer);
    }
    if (!pending_cascade_.empty()) {
      apply_cascade_gradients(*cascade_, merge(pending_cascade_), cfg_.optimizer);
    }
    pending_model_.clear();
    pending_cascade_.clear();
    pending_events_ = 0;
  }

  // Score with current parameters and caches; mutates nothing but counters.
  double predict_logit(const InteractionEvent& e) {
    CacheReads cr = read_caches(e);
    return model_forward(model_, pair_inputs(e, cr)).score;
  }

  // Scores the event, then applies its cache updates without touching the
  // retriever's parameters (prequential serving mode). With train_cascade
  // the cascade keeps learning from each label after it is scored.
  double score_and_observe(const InteractionEvent& e, bool train_cascade = false) {
    CacheReads cr = read_caches(e);
    ModelForward fwd = model_forward(model_, pair_inputs(e, cr));
    std::optional<CascadeForward> cf;
    if (cascade_) {
      cf = cascade_forward(*cascade_, e.user, e.item);
      if (train_cascade) {
        const BceResult cb = bce_loss(cf->logit, e.label);
        CascadeGradients cg = cascade_backward(*cascade_, cf->cache, cb.grad);
        if (std::isfinite(cb.loss) && cg.finite())
          apply_cascade_gradients(*cascade_, cg, cfg_.optimizer);
      }
    }
    write_caches(e, fwd.u, fwd.v, cf ? &cf->h_uv : nullptr);
    return fwd.score;
  }

  MetricsTimeline run_stream(std::vector<InteractionEvent> events, const SnapshotSink& sink = {}) {
    using Clock = std::chrono::steady_clock;
    const auto t0 = Clock::now();
    prepare_stream(events, cfg_.stream.waiting_period_ms);
    MetricsTimeline tl;
    MetricAccumulator window, overall;
    double window_loss = 0.0;
    std::uint64_t last_export = ~0ull;
    auto emit = [&] {
      TimelinePoint p;
      p.step = step_;
      p.window = window.size();
      p.loss = window.empty() ? 0.0 : window_loss / static_cast<double>(window.size());
      const MetricReport r = window.report();
      p.auc = r.auc;
      p.logloss = r.logloss;
      fill_cache_stats(p);
      p.skipped = skipped_;
      if (cfg_.stream.record_wall_time)
        p.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      tl.points.push_back(p);
      window.clear();
      window_loss = 0.0;
    };
    for (const InteractionEvent& e : events) {
      const EventOutcome o = train_event(e);
      if (!o.skipped) {
        window.add(o.logit, o.prob, e.label);
        overall.add(o.logit, o.prob, e.label);
        window_loss += o.loss;
      }
      if (step_ % cfg_.stream.eval_every == 0) emit();
      if (sink && step_ % cfg_.stream.snapshot_every == 0) {
        flush_batch();
        sink(step_, export_snapshot());
        last_export = step_;
      }
    }
    flush_batch();
    if (!window.empty()) emit();
    if (sink && last_export != step_) sink(step_, export_snapshot());
    tl.overall = overall.report();
    return tl;
  }

  // Scores every event with frozen retriever parameters. With Frozen the
  // cache stores are not written either; with Progressive they advance after
  // each score; CascadeOnline additionally keeps training the cascade.
  MetricReport evaluate(std::vector<InteractionEvent> events, EvalMode mode) {
    prepare_stream(events, cfg_.stream.waiting_period_ms);
    MetricAccumulator acc;
    for (const auto& e : events) {
      const double logit = mode == EvalMode::Frozen
                               ? predict_logit(e)
                               : score_and_observe(e, mode == EvalMode::CascadeOnline);
      acc.add(logit, sigmoid(logit), e.label);
    }
    return acc.report();
  }

  // Applies the waiting period and sorts into timestep order.
  static void prepare_stream(std::vector<InteractionEvent>& events, std::uint64_t waiting_ms) {
    for (auto& e : events)
      e.label_ready_time = std::max(e.label_ready_time, e.event_time + waiting_ms);
    sort_stream(events);
  }

  ModelSnapshot snapshot() const {
    ModelSnapshot s;
    s.global_step = step_;
    s.seed = cfg_.stream.seed;
    s.skipped_events = skipped_;
    s.rng_seed = cfg_.stream.seed;
    s.rng_draws = 0;
    collect_tower(model_.user, "user", s);
    collect_tower(model_.item, "item", s);
    if (cascade_) {
      for (std::size_t i = 0; i < cascade_->layers.size(); ++i)
        s.dense.push_back({"cascade.L" + std::to_string(i), cascade_->layers[i], cascade_->opt[i]});
      for (const auto& t : cascade_->user_embedder.tables()) s.sparse.push_back(t);
      for (const auto& t : cascade_->item_embedder.tables()) s.sparse.push_back(t);
      // Cascade step count rides in the readout block's optimizer counter.
    }
    if (cts_user_) {
      s.caches.push_back(*cts_user_);
      s.caches.push_back(*cts_item_);
    }
    if (cms_ && cms_->local_store()) s.caches.push_back(*cms_->local_store());
    return s;
  }

  std::vector<std::uint8_t> export_snapshot() const { return snapshot_export(snapshot()); }

  // Restores state from a snapshot produced under the same configuration.
  void restore(const ModelSnapshot& s) {
    if (!pending_model_.empty() || !pending_cascade_.empty())
      throw std::logic_error("restore: pending batch not flushed");
    ModelSnapshot ref = snapshot();
    if (s.dense.size() != ref.dense.size())
      throw ShapeError("restore: snapshot has " + std::to_string(s.dense.size()) +
                       " dense blocks, configuration expects " + std::to_string(ref.dense.size()));
    for (std::size_t i = 0; i < s.dense.size(); ++i) {
      const auto& a = s.dense[i];
      const auto& b = ref.dense[i];
      if (a.name != b.name || a.params.out_dim() != b.params.out_dim() ||
          a.params.in_dim() != b.params.in_dim())
        throw ShapeError("restore: dense block " + std::to_string(i) + " '" + a.name +
                         "' does not match configuration block '" + b.name + "'");
    }
    auto find_table = [&](const std::string& field) -> const SparseTable& {
      for (const auto& t : s.sparse)
        if (t.field() == field) return t;
      throw ShapeError("restore: snapshot lacks sparse table '" + field + "'");
    };
    auto restore_tables = [&](std::vector<SparseTable>& tables) {
      for (auto& t : tables) {
        const SparseTable& src = find_table(t.field());
        if (src.dim() != t.dim() || src.modulus() != t.modulus())
          throw ShapeError("restore: sparse table '" + t.field() + "' shape mismatch");
        t = src;
      }
    };
    std::size_t di = 0;
    restore_tower(model_.user, s, di);
    restore_tower(model_.item, s, di);
    restore_tables(model_.user.embedder.tables());
    restore_tables(model_.item.embedder.tables());
    if (cascade_) {
      for (std::size_t i = 0; i < cascade_->layers.size(); ++i, ++di) {
        cascade_->layers[i] = s.dense[di].params;
        cascade_->opt[i] = s.dense[di].opt;
      }
      cascade_->steps = cascade_->opt.back().step();
      restore_tables(cascade_->user_embedder.tables());
      restore_tables(cascade_->item_embedder.tables());
    }
    auto find_cache = [&](const std::string& name) -> const CacheStore* {
      for (const auto& c : s.caches)
        if (c.name() == name) return &c;
      return nullptr;
    };
    auto restore_cache = [&](CacheStore& dst) {
      const CacheStore* src = find_cache(dst.name());
      if (!src) throw ShapeError("restore: snapshot lacks cache '" + dst.name() + "'");
      if (src->dim() != dst.dim() || src->precision() != dst.precision())
        throw ShapeError("restore: cache '" + dst.name() + "' shape mismatch");
      dst = *src;
    };
    if (cts_user_) {
      restore_cache(*cts_user_);
      restore_cache(*cts_item_);
    }
    if (cms_ && cms_->mutable_local_store()) restore_cache(*cms_->mutable_local_store());
    step_ = s.global_step;
    skipped_ = s.skipped_events;
  }

 private:
  struct CacheReads {
    Vec c_user, c_item, s_user, s_item;
  };

  CacheReads read_caches(const InteractionEvent& e) {
    CacheReads r;
    if (cts_user_) {
      r.c_user = cts_user_->read(user_key(e.user_id));
      r.c_item = cts_item_->read(item_key(e.item_id));
      trace('R', 2);
    }
    if (cms_) {
      r.s_user = cms_->read(user_key(e.user_id));
      r.s_item = cms_->read(item_key(e.item_id));
      trace('R', 2);
    }
    return r;
  }

  static PairInputs pair_inputs(const InteractionEvent& e, const CacheReads& cr) {
    return PairInputs{&e.user, &e.item, cr.c_user, cr.s_user, cr.c_item, cr.s_item};
  }

  void write_caches(const InteractionEvent& e, const Vec& u, const Vec& v, const Vec* h_uv) {
    if (cts_user_) {
      cts_update(*cts_user_, *cts_item_, e.user_id, e.item_id, u, v, e.label);
      if (e.label == 1) trace('W', 2);
    }
    if (cms_ && h_uv) {
      cms_->ema_put(user_key(e.user_id), *h_uv, cfg_.stream.beta);
      cms_->ema_put(item_key(e.item_id), *h_uv, cfg_.stream.beta);
      trace('W', 2);
    }
  }

  void trace(char op, int n) {
    if (trace_)
      for (int i = 0; i < n; ++i) trace_->push_back(op);
  }

  bool trains_cascade(const InteractionEvent& e) const {
    if (cfg_.cascade_train_fraction >= 1.0) return true;
    std::uint64_t st = cfg_.stream.seed ^ (e.user_id * 0x9e3779b97f4a7c15ull) ^
                       (e.item_id * 0xc2b2ae3d27d4eb4full) ^ e.event_time;
    const double u = static_cast<double>(splitmix64(st) >> 11) * 0x1.0p-53;
    return u < cfg_.cascade_train_fraction;
  }

  void fill_cache_stats(TimelinePoint& p) const {
    if (cts_user_) {
      p.cts_reads = cts_user_->counters().reads + cts_item_->counters().reads;
      p.cts_hits = cts_user_->counters().hits + cts_item_->counters().hits;
    }
    if (cms_) {
      const CacheCounters c = cms_->counters();
      p.cms_reads = c.reads;
      p.cms_hits = c.hits;
    }
  }

  static void collect_tower(const Tower& t, const std::string& name, ModelSnapshot& s) {
    for (std::size_t i = 0; i < t.layers.size(); ++i) {
      const std::string base = name + ".L" + std::to_string(i);
      if (const auto* d = std::get_if<DenseLayer>(&t.layers[i])) {
        s.dense.push_back({base + ".theta", d->params, t.opt[i].theta});
      } else {
        const auto& p = std::get<CasParams>(t.layers[i]);
        s.dense.push_back({base + ".theta", p.theta, t.opt[i].theta});
        s.dense.push_back({base + ".phi", p.phi, t.opt[i].phi});
      }
    }
    for (const auto& tab : t.embedder.tables()) s.sparse.push_back(tab);
  }

  static void restore_tower(Tower& t, const ModelSnapshot& s, std::size_t& di) {
    for (std::size_t i = 0; i < t.layers.size(); ++i) {
      if (auto* d = std::get_if<DenseLayer>(&t.layers[i])) {
        d->params = s.dense[di].params;
        t.opt[i].theta = s.dense[di++].opt;
      } else {
        auto& p = std::get<CasParams>(t.layers[i]);
        p.theta = s.dense[di].params;
        t.opt[i].theta = s.dense[di++].opt;
        p.phi = s.dense[di].params;
        t.opt[i].phi = s.dense[di++].opt;
      }
    }
  }

  static void merge_rows(std::vector<SparseRowGrad>& rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      return std::tie(a.table, a.id) < std::tie(b.table, b.id);
    });
    std::vector<SparseRowGrad> out;
    for (auto& r : rows) {
      if (!out.empty() && out.back().table == r.table && out.back().id == r.id) {
        for (std::size_t i = 0; i < r.grad.size(); ++i) out.back().grad[i] += r.grad[i];
      } else {
        out.push_back(std::move(r));
      }
    }
    rows = std::move(out);
  }

  static TowerGradients merge_tower(std::vector<TowerGradients*> parts) {
    TowerGradients acc = *parts.front();
    for (std::size_t p = 1; p < parts.size(); ++p) {
      for (std::size_t l = 0; l < acc.layers.size(); ++l) {
        acc.layers[l].theta.add(parts[p]->layers[l].theta);
        acc.layers[l].phi.add(parts[p]->layers[l].phi);
      }
      for (auto& r : parts[p]->rows) acc.rows.push_back(r);
    }
    merge_rows(acc.rows);
    return acc;
  }

  static ModelGradients merge(std::vector<ModelGradients>& parts) {
    std::vector<TowerGradients*> u, v;
    for (auto& p : parts) {
      u.push_back(&p.user);
      v.push_back(&p.item);
    }
    return ModelGradients{merge_tower(u), merge_tower(v)};
  }

  static CascadeGradients merge(std::vector<CascadeGradients>& parts) {
    CascadeGradients acc = parts.front();
    for (std::size_t p = 1; p < parts.size(); ++p) {
      for (std::size_t l = 0; l < acc.layers.size(); ++l) acc.layers[l].add(parts[p].layers[l]);
      for (auto& r : parts[p].user_rows) acc.user_rows.push_back(r);
      for (auto& r : parts[p].item_rows) acc.item_rows.push_back(r);
    }
    merge_rows(acc.user_rows);
    merge_rows(acc.item_rows);
    return acc;
  }

  TrainerConfig cfg_;
  TwoTowerModel model_;
  std::optional<CascadeNet> cascade_;
  std::optional<CacheStore> cts_user_;
  std::optional<CacheStore> cts_item_;
  std::unique_ptr<CmsBackend> cms_;
  std::uint64_t step_ = 0;
  std::uint64_t skipped_ = 0;
  std::vector<char>* trace_ = nullptr;
  std::vector<ModelGradients> pending_model_;
  std::vector<CascadeGradients> pending_cascade_;
  std::size_t pending_events_ = 0;
};

struct EvalOutcome {
  MetricReport metrics;
};

// Restores `snapshot` under `cfg` and scores `events`; the snapshot itself is
// never modified.
inline EvalOutcome evaluate_stream(const TrainerConfig& cfg, std::vector<InteractionEvent> events,
                                   const ModelSnapshot& snapshot, EvalMode mode,
                                   std::unique_ptr<CmsBackend> cms = nullptr) {
  Trainer t(cfg, std::move(cms));
  t.restore(snapshot);
  return EvalOutcome{t.evaluate(std::move(events), mode)};
}

}  // namespace cs3
