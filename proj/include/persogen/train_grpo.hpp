#pragma once
// Online RL with group-relative advantages: G rollouts per prompt, rewards
// standardized within the group, a token-level clipped importance-ratio
// surrogate, and an exact per-position categorical KL penalty against the
// post-SFT reference. Includes the reward-std collapse monitor and the
// pre-collapse checkpoint selection rule.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "persogen/io.hpp"
#include "persogen/policy.hpp"
#include "persogen/rewards.hpp"
#include "persogen/vecops.hpp"

namespace persogen {

struct GrpoConfig {
  int group_size = 8;        // G
  double beta = 0.04;        // KL coefficient
  double eps_clip = 0.2;     // clip half-width
  double lr = 1e-2;          // paper preset: 1e-6
  int max_steps = 300;       // paper preset: up to 800
  int batch_size = 4;        // prompts per step; paper preset: 8
  std::uint64_t seed = 0;
  double temperature = 1.0;
  int ckpt_every = 10;
  int monitor_window = 50;
  double monitor_drop_ratio = 0.3;

  void validate() const {
    if (group_size < 2) throw std::invalid_argument("GrpoConfig: group_size must be >= 2");
    if (eps_clip <= 0) throw std::invalid_argument("GrpoConfig: eps_clip must be positive");
    if (beta < 0) throw std::invalid_argument("GrpoConfig: beta must be non-negative");
    if (lr <= 0 || max_steps < 0 || batch_size <= 0 || ckpt_every <= 0)
      throw std::invalid_argument("GrpoConfig: bad training parameters");
  }
};

// (R_j - mean) / std with population statistics; a degenerate group (std
// below 1e-8) gets all-zero advantages.
inline std::vector<double> compute_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2)
    throw std::invalid_argument("compute_advantages: need a group of at least 2");
  const double mean = mean_of(rewards);
  const double std = stddev_of(rewards);
  std::vector<double> out(rewards.size(), 0.0);
  if (std < 1e-8) return out;
  for (std::size_t j = 0; j < rewards.size(); ++j) out[j] = (rewards[j] - mean) / std;
  return out;
}

// Exact sum over the L prefix contexts of the categorical KL(pi_theta || pi_ref).
// The reference re-encodes the history with its own embeddings; the hashed tag
// feature is data and carries over.
inline double kl_to_ref(const PolicyParams& params, const PolicySnapshot& ref,
                        const HistoryFeature& hf, std::span<const int> tokens) {
  HistoryFeature hf_ref = hf;
  hf_ref.img_feat = detail::img_feat_under(ref.params, hf);
  double total = 0.0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto prefix = tokens.subspan(0, t);
    const std::vector<double> lp = log_softmax(logits(params, hf, prefix));
    const std::vector<double> lq = log_softmax(logits(ref.params, hf_ref, prefix));
    for (std::size_t v = 0; v < lp.size(); ++v) total += std::exp(lp[v]) * (lp[v] - lq[v]);
  }
  return total;
}

struct RolloutGroup {
  Sample prompt;
  std::vector<Rollout> rollouts;   // sampled under pi_old; logprobs recorded then
  std::vector<double> rewards;     // composite reward per rollout
  std::vector<double> advantages;  // group-standardized
};

inline RolloutGroup make_rollout_group(const PolicyParams& old_params, const Sample& prompt,
                                       const RewardScorer& scorer, const Codebook& cb,
                                       const GrpoConfig& cfg, SeededRng& rng) {
  RolloutGroup group;
  group.prompt = prompt;
  const HistoryFeature hf = encode_history(old_params, prompt);
  const TokenImage& proto = prompt.golden.image;
  for (int j = 0; j < cfg.group_size; ++j) {
    Rollout r = sample_image(old_params, hf, proto.tokens.size(), cfg.temperature, rng);
    TokenImage img{proto.grid_w, proto.grid_h, r.tokens, cb.codebook_id};
    const PixelImage px = decode_image(img, cb);
    group.rewards.push_back(scorer.score(prompt, px).composite);
    group.rollouts.push_back(std::move(r));
  }
  group.advantages = compute_advantages(group.rewards);
  return group;
}

struct GrpoStats {
  double mean_kl_per_token = 0.0;  // averaged over rollout tokens
  double clip_fraction = 0.0;      // tokens on the clipped branch
};

// Token-level ratios with the rollout advantage broadcast: the objective is
//   mean_groups (1/G) sum_j [ mean_t min(w A_j, clip(w,1+-eps) A_j) - beta KL_j / L ]
// and the returned loss is its negation. Old log-probs are revalidated against
// the snapshot that produced the rollouts.
inline double grpo_loss(const PolicyParams& params, const PolicySnapshot& old_policy,
                        const PolicySnapshot& ref_policy, std::span<const RolloutGroup> groups,
                        const GrpoConfig& cfg, PolicyGrad* grad = nullptr,
                        GrpoStats* stats = nullptr) {
  cfg.validate();
  if (groups.empty()) throw std::invalid_argument("grpo_loss: no rollout groups");
  const double lo = 1.0 - cfg.eps_clip, hi = 1.0 + cfg.eps_clip;

  double objective = 0.0;
  double kl_sum = 0.0;
  std::size_t token_count = 0, clipped_count = 0;

  for (const RolloutGroup& group : groups) {
    if (int(group.rollouts.size()) != cfg.group_size ||
        group.advantages.size() != group.rollouts.size())
      throw std::invalid_argument("grpo_loss: malformed rollout group");
    const HistoryFeature hf = encode_history(params, group.prompt);
    HistoryFeature hf_old = hf;
    hf_old.img_feat = detail::img_feat_under(old_policy.params, hf);
    HistoryFeature hf_ref = hf;
    hf_ref.img_feat = detail::img_feat_under(ref_policy.params, hf);
    const double group_scale = 1.0 / (double(groups.size()) * double(cfg.group_size));

    for (std::size_t j = 0; j < group.rollouts.size(); ++j) {
      const Rollout& rollout = group.rollouts[j];
      const double advantage = group.advantages[j];
      const std::vector<int>& tokens = rollout.tokens;
      const std::size_t L = tokens.size();
      const double token_scale = group_scale / double(L);
      std::vector<std::vector<double>> dlogits;
      if (grad) dlogits.reserve(L);

      for (std::size_t t = 0; t < L; ++t) {
        const auto prefix = std::span<const int>(tokens.data(), t);
        const std::vector<double> lp = log_softmax(logits(params, hf, prefix));
        const std::vector<double> lq =
            log_softmax(logits(ref_policy.params, hf_ref, prefix));
        const std::vector<double> lp_old =
            log_softmax(logits(old_policy.params, hf_old, prefix));
        const int y = tokens[t];
        if (std::abs(lp_old[y] - rollout.per_token_logprob[t]) > 1e-9)
          throw std::runtime_error(
              "grpo_loss: rollout log-probs do not match the old policy snapshot");

        const double ratio = std::exp(lp[y] - rollout.per_token_logprob[t]);
        const double unclipped = ratio * advantage;
        const double clipped = std::clamp(ratio, lo, hi) * advantage;
        const bool use_unclipped = unclipped <= clipped;
        objective += token_scale * std::min(unclipped, clipped);

        double kl_t = 0.0;
        for (std::size_t v = 0; v < lp.size(); ++v) kl_t += std::exp(lp[v]) * (lp[v] - lq[v]);
        objective -= token_scale * cfg.beta * kl_t;
        kl_sum += kl_t;
        ++token_count;
        clipped_count += !use_unclipped;

        if (grad) {
          // dLoss/dz = -token_scale * [ c (e_y - p) - beta p (s - KL_t) ]
          const double c = use_unclipped ? ratio * advantage : 0.0;
          std::vector<double> row(lp.size());
          for (std::size_t v = 0; v < lp.size(); ++v) {
            const double p = std::exp(lp[v]);
            const double surrogate = c * ((int(v) == y ? 1.0 : 0.0) - p);
            const double kl_term = cfg.beta * p * ((lp[v] - lq[v]) - kl_t);
            row[v] = -token_scale * (surrogate - kl_term);
          }
          dlogits.push_back(std::move(row));
        }
      }
      if (grad) accumulate_sequence_grad(params, hf, tokens, dlogits, *grad);
    }
  }

  if (stats) {
    stats->mean_kl_per_token = token_count ? kl_sum / double(token_count) : 0.0;
    stats->clip_fraction = token_count ? double(clipped_count) / double(token_count) : 0.0;
  }
  const double loss = -objective;
  if (!std::isfinite(loss)) throw std::runtime_error("grpo_loss: non-finite loss");
  return loss;
}

// ---- reward-hacking monitor -------------------------------------------------

struct MonitorState {
  int window = 50;
  double drop_ratio = 0.3;
  std::vector<double> means;  // filled by the training loop
  std::vector<double> stds;
  std::optional<std::int64_t> hack_step;
};

// Appends one step's reward std (steps are 1-based). Once a full window of
// previous entries exists, a std below drop_ratio times the window median
// flags the current step; the flag never moves once set.
inline void monitor_update(MonitorState& monitor, double step_std) {
  monitor.stds.push_back(step_std);
  const std::size_t n = monitor.stds.size();
  if (monitor.hack_step || n < std::size_t(monitor.window) + 1) return;
  std::vector<double> window(monitor.stds.end() - 1 - monitor.window, monitor.stds.end() - 1);
  std::sort(window.begin(), window.end());
  const std::size_t w = window.size();
  const double median =
      w % 2 ? window[w / 2] : 0.5 * (window[w / 2 - 1] + window[w / 2]);
  if (step_std < monitor.drop_ratio * median) monitor.hack_step = std::int64_t(n);
}

// ---- training loop -----------------------------------------------------------

struct GrpoLogRow {
  std::int64_t step = 0;
  double reward_mean = 0.0;
  double reward_std = 0.0;
  double kl = 0.0;  // mean per-token KL to the reference
  double loss = 0.0;

  bool operator==(const GrpoLogRow&) const = default;
};

struct GrpoCheckpoint {
  std::int64_t step = 0;
  PolicyParams params;
};

struct GrpoLog {
  std::vector<GrpoLogRow> rows;
  std::vector<GrpoCheckpoint> checkpoints;
};

inline std::string grpo_log_csv(const GrpoLog& log) {
  std::string out = "step,reward_mean,reward_std,kl,loss\n";
  char buf[160];
  for (const GrpoLogRow& r : log.rows) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(r.step), r.reward_mean, r.reward_std, r.kl, r.loss);
    out += buf;
  }
  return out;
}

// One GRPO step: freeze pi_old at the current parameters, roll out G images
// for each of batch_size prompts, score, standardize, and apply one
// adaptive-moment update of the clipped surrogate. First-pass ratios are one.
inline GrpoLogRow grpo_step(PolicyParams& params, OptState& opt,
                            std::span<const Sample> train, const RewardScorer& scorer,
                            const Codebook& cb, const PolicySnapshot& ref,
                            const GrpoConfig& cfg, MonitorState& monitor,
                            std::int64_t step_index, int threads = 1) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("grpo_step: no training prompts");
  const PolicySnapshot old_policy{params, "old"};

  SeededRng pick_rng(derive_seed(cfg.seed, 0x9120, std::uint64_t(step_index)));
  std::vector<std::size_t> prompt_idx(std::size_t(cfg.batch_size));
  for (auto& i : prompt_idx) i = pick_rng.uniform_int(train.size());

  std::vector<RolloutGroup> groups(prompt_idx.size());
  for (std::size_t slot = 0; slot < prompt_idx.size(); ++slot) {
    // serial prewarm so the parallel phase only reads caches
    if (const auto* cached = dynamic_cast<const Scorer*>(&scorer))
      cached->prewarm(train[prompt_idx[slot]]);
  }
  parallel_for(prompt_idx.size(), threads, [&](std::size_t slot) {
    SeededRng rng(derive_seed(cfg.seed, 0x9077, std::uint64_t(step_index), slot));
    groups[slot] =
        make_rollout_group(old_policy.params, train[prompt_idx[slot]], scorer, cb, cfg, rng);
  });

  PolicyGrad grad = PolicyGrad::zeros_like(params);
  GrpoStats stats;
  const double loss = grpo_loss(params, old_policy, ref, groups, cfg, &grad, &stats);
  adam_step(params, grad, opt, cfg.lr);

  std::vector<double> all_rewards;
  for (const RolloutGroup& g : groups)
    all_rewards.insert(all_rewards.end(), g.rewards.begin(), g.rewards.end());
  GrpoLogRow row;
  row.step = step_index;
  row.reward_mean = mean_of(all_rewards);
  row.reward_std = stddev_of(all_rewards);
  row.kl = stats.mean_kl_per_token;
  row.loss = loss;
  monitor.means.push_back(row.reward_mean);
  monitor_update(monitor, row.reward_std);
  return row;
}

struct GrpoResult {
  PolicyParams final_params;
  OptState final_opt;
  GrpoLog log;
  MonitorState monitor;
};

inline GrpoResult run_grpo(const PolicyParams& sft_params, std::span<const Sample> train,
                           const RewardScorer& scorer, const Codebook& cb,
                           const GrpoConfig& cfg, int threads = 1) {
  cfg.validate();
  GrpoResult res;
  res.monitor.window = cfg.monitor_window;
  res.monitor.drop_ratio = cfg.monitor_drop_ratio;
  PolicyParams params = sft_params;
  OptState opt = OptState::for_params(params);
  const PolicySnapshot ref{sft_params, "ref"};
  res.log.checkpoints.push_back({0, params});
  for (std::int64_t step = 1; step <= cfg.max_steps; ++step) {
    res.log.rows.push_back(
        grpo_step(params, opt, train, scorer, cb, ref, cfg, res.monitor, step, threads));
    if (step % cfg.ckpt_every == 0) res.log.checkpoints.push_back({step, params});
  }
  res.final_params = params;
  res.final_opt = opt;
  return res;
}

struct SelectedCheckpoint {
  PolicyParams params;
  std::int64_t step = 0;
  bool fallback_to_sft = false;
};

// Among checkpoints strictly before the hack flag (all of them when no flag),
// picks the one with the highest reward mean smoothed over the trailing 10
// steps; earlier step wins ties. With nothing eligible the step-0 (SFT)
// checkpoint comes back marked as a fallback.
inline SelectedCheckpoint select_final_checkpoint(const GrpoLog& log,
                                                  const MonitorState& monitor) {
  if (log.checkpoints.empty())
    throw std::invalid_argument("select_final_checkpoint: no checkpoints recorded");
  const std::int64_t cutoff = monitor.hack_step.value_or(
      std::numeric_limits<std::int64_t>::max());

  auto smoothed = [&](std::int64_t step) {
    double sum = 0.0;
    int count = 0;
    for (const GrpoLogRow& row : log.rows)
      if (row.step > step - 10 && row.step <= step) {
        sum += row.reward_mean;
        ++count;
      }
    return count ? sum / count : -std::numeric_limits<double>::infinity();
  };

  const GrpoCheckpoint* best = nullptr;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const GrpoCheckpoint& ck : log.checkpoints) {
    if (ck.step < 1 || ck.step >= cutoff) continue;
    const double score = smoothed(ck.step);
    if (score > best_score) {
      best_score = score;
      best = &ck;
    }
  }
  if (!best) {
    // hack flagged before the first recorded checkpoint
    return {log.checkpoints.front().params, log.checkpoints.front().step, true};
  }
  return {best->params, best->step, false};
}

}  // namespace persogen
