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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace cs3 {

struct ScoredExample {
  double score = 0.0;
  int label = 0;
};

namespace detail {

// Pairwise summation over [begin, end) in input order.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t mid = v.size() / 2;
  return pairwise_sum(v.first(mid)) + pairwise_sum(v.subspan(mid));
}

}  // namespace detail

// Rank-based AUC with average ranks for ties, i.e. the probability that a
// random positive outscores a random negative with ties counted as 1/2.
// Single-class input has no AUC and yields nullopt.
inline std::optional<double> auc(std::span<const ScoredExample> set) {
  std::size_t pos = 0;
  for (const auto& e : set) {
    if (e.label != 0 && e.label != 1) throw std::invalid_argument("auc: label must be 0 or 1");
    if (!std::isfinite(e.score)) throw std::invalid_argument("auc: non-finite score");
    pos += static_cast<std::size_t>(e.label);
  }
  const std::size_t neg = set.size() - pos;
  if (pos == 0 || neg == 0) return std::nullopt;

  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return set[a].score < set[b].score; });
  // Sum of (1-based) ranks of positives; a tie group spanning ranks
  // [i+1, j] contributes its mean rank (i+1+j)/2 per positive.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::size_t group_pos = 0;
    while (j < order.size() && set[order[j]].score == set[order[i]].score) {
      group_pos += static_cast<std::size_t>(set[order[j]].label);
      ++j;
    }
    rank_sum += static_cast<double>(group_pos) * 0.5 * static_cast<double>(i + 1 + j);
    i = j;
  }
  const double p = static_cast<double>(pos);
  const double n = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

inline constexpr double kLogLossClamp = 1e-7;

struct ProbExample {
  double prob = 0.5;
  int label = 0;
};

inline double logloss(std::span<const ProbExample> set, double clamp = kLogLossClamp) {
  if (set.empty()) throw std::invalid_argument("logloss: empty set");
  std::vector<double> terms;
  terms.reserve(set.size());
  for (const auto& e : set) {
    if (!(e.prob >= 0.0 && e.prob <= 1.0))
      throw std::invalid_argument("logloss: probability outside [0,1]");
    if (e.label != 0 && e.label != 1) throw std::invalid_argument("logloss: label must be 0 or 1");
    const double q = std::clamp(e.prob, clamp, 1.0 - clamp);
    terms.push_back(e.label == 1 ? -std::log(q) : -std::log(1.0 - q));
  }
  return detail::pairwise_sum(terms) / static_cast<double>(set.size());
}

struct MetricReport {
  std::optional<double> auc;
  double logloss = 0.0;
  std::size_t count = 0;
  std::size_t positives = 0;
};

// Collects (logit, label) pairs; AUC uses the logit directly, LogLoss its
// sigmoid. AUC is invariant to the monotone map between them.
class MetricAccumulator {
 public:
  void add(double logit, double prob, int label) {
    scores_.push_back({logit, label});
    probs_.push_back({prob, label});
  }
  std::size_t size() const { return scores_.size(); }
  bool empty() const { return scores_.empty(); }
  void clear() {
    scores_.clear();
    probs_.clear();
  }
  MetricReport report() const {
    MetricReport r;
    r.count = scores_.size();
    for (const auto& s : scores_) r.positives += static_cast<std::size_t>(s.label);
    if (!scores_.empty()) {
      r.auc = auc(scores_);
      r.logloss = logloss(probs_);
    }
    return r;
  }

 private:
  std::vector<ScoredExample> scores_;
  std::vector<ProbExample> probs_;
};

}  // namespace cs3
