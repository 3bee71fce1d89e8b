#pragma once
// Evaluation protocol: n candidates per test sample, per-metric best-of
// selection, table rows at the published scaling (perceptual metrics x100,
// LPIPS inverted inside the metric average).

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "persogen/io.hpp"
#include "persogen/policy.hpp"
#include "persogen/rewards.hpp"

namespace persogen {

struct EvalConfig {
  int window_k = 6;       // history window the samples were built with
  int future_p = 3;
  int n_candidates = 4;
  std::uint64_t seed = 0;
  double temperature = 1.0;

  void validate() const {
    if (n_candidates < 1) throw std::invalid_argument("EvalConfig: need at least one candidate");
  }
};

struct MetricTable {
  std::map<MetricCell, double> rows;  // reported scale (perceptual cells x100)
  std::int64_t sample_count = 0;
  std::optional<double> average;      // set when all 17 rows are present
};

inline std::vector<PixelImage> generate_candidates(const PolicyParams& params,
                                                   const Sample& sample, const Codebook& cb,
                                                   int n, double temperature, SeededRng& rng) {
  if (n < 1) throw std::invalid_argument("generate_candidates: need at least one candidate");
  const HistoryFeature hf = encode_history(params, sample);
  const TokenImage& proto = sample.golden.image;
  std::vector<PixelImage> out;
  out.reserve(std::size_t(n));
  for (int j = 0; j < n; ++j) {
    const Rollout r = sample_image(params, hf, proto.tokens.size(), temperature, rng);
    out.push_back(decode_image(TokenImage{proto.grid_w, proto.grid_h, r.tokens, cb.codebook_id}, cb));
  }
  return out;
}

// max across candidates, except LPIPS where lower is better
inline double best_of(std::span<const double> values, MetricId metric) {
  if (values.empty()) throw std::invalid_argument("best_of: empty input");
  double best = values[0];
  for (double v : values.subspan(1))
    best = metric == MetricId::LPIPS ? std::min(best, v) : std::max(best, v);
  return best;
}

struct SampleEval {
  std::string user_id;
  int origin_window_index = 0;
  std::map<MetricCell, double> best_raw;  // per-metric best across candidates, unit scale
};

using CandidateGenerator =
    std::function<std::vector<PixelImage>(const Sample& sample, std::size_t sample_index)>;

// Core protocol against an arbitrary candidate source. Per-metric bests are
// taken independently per cell; samples with an empty future group simply do
// not contribute to the future rows.
inline MetricTable evaluate_with_generator(const CandidateGenerator& generate,
                                           std::span<const Sample> test, const Codebook& cb,
                                           const ProviderSet& providers, const EvalConfig& cfg,
                                           std::vector<SampleEval>* per_sample = nullptr,
                                           int threads = 1) {
  cfg.validate();
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  const Scorer scorer(cb, providers);

  std::vector<SampleEval> evals(test.size());
  parallel_for(test.size(), threads, [&](std::size_t i) {
    const Sample& sample = test[i];
    const std::vector<PixelImage> candidates = generate(sample, i);
    if (candidates.empty()) throw std::runtime_error("evaluate: generator returned nothing");
    std::map<MetricCell, std::vector<double>> cell_values;
    for (const PixelImage& px : candidates)
      for (const auto& [cell, raw] : scorer.score(sample, px).raw)
        cell_values[cell].push_back(raw);
    SampleEval ev;
    ev.user_id = sample.user_id;
    ev.origin_window_index = sample.origin_window_index;
    for (const auto& [cell, values] : cell_values)
      ev.best_raw[cell] = best_of(values, cell.metric);
    evals[i] = std::move(ev);
  });

  MetricTable table;
  table.sample_count = std::int64_t(test.size());
  for (const MetricCell& cell : reward_cell_layout()) {
    double sum = 0.0;
    std::int64_t n = 0;
    for (const SampleEval& ev : evals) {
      auto it = ev.best_raw.find(cell);
      if (it == ev.best_raw.end()) continue;
      sum += it->second;
      ++n;
    }
    if (n == 0) continue;
    const double mean = sum / double(n);
    table.rows[cell] = metric_scaled_by_100(cell.metric) ? 100.0 * mean : mean;
  }
  if (per_sample) *per_sample = std::move(evals);
  if (table.rows.size() == reward_cell_layout().size()) {
    double total = 0.0;
    for (const auto& [cell, value] : table.rows)
      total += cell.metric == MetricId::LPIPS ? 100.0 - value : value;
    table.average = total / double(table.rows.size());
  }
  return table;
}

inline MetricTable evaluate(const PolicyParams& params, std::span<const Sample> test,
                            const Codebook& cb, const ProviderSet& providers,
                            const EvalConfig& cfg, std::vector<SampleEval>* per_sample = nullptr,
                            int threads = 1) {
  return evaluate_with_generator(
      [&](const Sample& sample, std::size_t i) {
        SeededRng rng(derive_seed(cfg.seed, 0xE7A1, i));
        return generate_candidates(params, sample, cb, cfg.n_candidates, cfg.temperature, rng);
      },
      test, cb, providers, cfg, per_sample, threads);
}

// Mean of the 17 table rows with every LPIPS value replaced by 100 minus
// itself; the aesthetics row enters unscaled.
inline double metric_average(const MetricTable& table) {
  const auto& layout = reward_cell_layout();
  double total = 0.0;
  for (const MetricCell& cell : layout) {
    auto it = table.rows.find(cell);
    if (it == table.rows.end())
      throw std::invalid_argument(std::string("metric_average: missing row ") +
                                  metric_name(cell.metric) + "/" + group_name(cell.group));
    total += cell.metric == MetricId::LPIPS ? 100.0 - it->second : it->second;
  }
  return total / double(layout.size());
}

inline std::string metric_table_csv(const MetricTable& table) {
  auto section = [](TargetGroup g) {
    switch (g) {
      case TargetGroup::Golden: return "Relevance to Golden Next Item";
      case TargetGroup::History: return "Relevance to Historical Items";
      case TargetGroup::Future: return "Relevance to Potential Future Items";
      case TargetGroup::None: return "Aesthetics Metric";
    }
    return "?";
  };
  std::string out = "section,metric,value\n";
  char buf[128];
  for (const MetricCell& cell : reward_cell_layout()) {
    auto it = table.rows.find(cell);
    if (it == table.rows.end()) continue;
    std::snprintf(buf, sizeof buf, "%s,%s,%.17g\n", section(cell.group),
                  metric_name(cell.metric), it->second);
    out += buf;
  }
  if (table.average) {
    std::snprintf(buf, sizeof buf, "Metric Average,,%.17g\n", *table.average);
    out += buf;
  }
  return out;
}

}  // namespace persogen
