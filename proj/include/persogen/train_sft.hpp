#pragma once
// Supervised fine-tuning: teacher-forced cross-entropy on the golden image's
// tokens, validation-loss model selection.

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "persogen/dataset.hpp"
#include "persogen/policy.hpp"

namespace persogen {

struct SftConfig {
  double lr = 1e-2;       // paper preset: 4e-5
  int batch_size = 16;    // paper preset: 64
  int epochs = 5;         // paper preset: 1
  std::uint64_t seed = 0;
  int eval_every = 10;    // steps between validation passes

  void validate() const {
    if (lr <= 0 || batch_size <= 0 || epochs < 0 || eval_every <= 0)
      throw std::invalid_argument("SftConfig: positive values required");
  }
};

struct TrainLogRow {
  std::int64_t step = 0;
  std::optional<double> train_loss;
  std::optional<double> val_loss;

  bool operator==(const TrainLogRow&) const = default;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  std::int64_t best_step = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::string> checkpoint_paths;  // filled by callers that persist

  bool operator==(const TrainLog&) const = default;
};

// Mean over samples of the per-token cross entropy of the golden tokens under
// teacher forcing. Pass a grad accumulator to also collect d(loss)/d(params).
inline double sft_loss_grad(const PolicyParams& params, std::span<const Sample> batch,
                            PolicyGrad* grad) {
  if (batch.empty()) throw std::invalid_argument("sft_loss: empty batch");
  const double inv_batch = 1.0 / double(batch.size());
  double total = 0.0;
  for (const Sample& sample : batch) {
    if (sample.golden.image.tokens.empty())
      throw std::invalid_argument("sft_loss: sample without golden tokens");
    const HistoryFeature hf = encode_history(params, sample);
    const std::vector<int>& tokens = sample.golden.image.tokens;
    const std::size_t L = tokens.size();
    std::vector<std::vector<double>> dlogits;
    if (grad) dlogits.reserve(L);
    double sample_loss = 0.0;
    for (std::size_t t = 0; t < L; ++t) {
      const std::vector<double> z =
          logits(params, hf, std::span<const int>(tokens.data(), t));
      const std::vector<double> lp = log_softmax(z);
      const int y = tokens[t];
      sample_loss -= lp[y];
      if (grad) {
        std::vector<double> row(lp.size());
        const double scale = inv_batch / double(L);
        for (std::size_t v = 0; v < lp.size(); ++v) row[v] = std::exp(lp[v]) * scale;
        row[std::size_t(y)] -= scale;
        dlogits.push_back(std::move(row));
      }
    }
    total += sample_loss / double(L);
    if (grad) accumulate_sequence_grad(params, hf, tokens, dlogits, *grad);
  }
  total *= inv_batch;
  if (!std::isfinite(total)) throw std::runtime_error("sft_loss: non-finite loss");
  return total;
}

inline double sft_loss(const PolicyParams& params, std::span<const Sample> batch) {
  return sft_loss_grad(params, batch, nullptr);
}

struct SftResult {
  PolicyParams best_params;
  std::int64_t best_step = 0;
  TrainLog log;
  PolicyParams final_params;
  OptState final_opt;
};

// Seeded shuffling per epoch, fresh augmented copies per epoch, adaptive-moment
// updates, periodic validation; returns the checkpoint with the lowest
// validation loss (earliest step on ties). Validation always runs on the raw
// samples, never on augmented ones.
inline SftResult train_sft(const SplitSet& split, const SftConfig& cfg,
                           const PolicyParams& initial, const AugmentConfig& aug) {
  cfg.validate();
  if (split.train.empty() || split.val.empty())
    throw std::invalid_argument("train_sft: train and val must be non-empty");

  SftResult res;
  res.best_params = initial;
  res.final_params = initial;
  res.final_opt = OptState::for_params(initial);
  if (cfg.epochs == 0) return res;

  PolicyParams params = initial;
  OptState opt = OptState::for_params(params);
  TrainLog& log = res.log;
  std::int64_t step = 0;

  auto consider_best = [&](double val) {
    if (val < log.best_val) {
      log.best_val = val;
      log.best_step = step;
      res.best_params = params;
      res.best_step = step;
    }
  };

  // baseline validation before any update
  {
    const double val = sft_loss(params, split.val);
    log.rows.push_back({0, std::nullopt, val});
    consider_best(val);
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    SeededRng erng(derive_seed(cfg.seed, 0xE70C4, std::uint64_t(epoch)));
    std::vector<Sample> data = split.train;
    for (const Sample& s : split.train)
      for (int c = 0; c < aug.copies_per_sample; ++c) data.push_back(augment(s, aug, erng));
    for (std::size_t i = data.size() - 1; i > 0; --i)
      std::swap(data[i], data[erng.uniform_int(i + 1)]);

    for (std::size_t start = 0; start < data.size(); start += std::size_t(cfg.batch_size)) {
      const std::size_t end = std::min(data.size(), start + std::size_t(cfg.batch_size));
      PolicyGrad grad = PolicyGrad::zeros_like(params);
      const double loss =
          sft_loss_grad(params, std::span<const Sample>(data.data() + start, end - start), &grad);
      adam_step(params, grad, opt, cfg.lr);
      ++step;
      TrainLogRow row{step, loss, std::nullopt};
      if (step % cfg.eval_every == 0) {
        const double val = sft_loss(params, split.val);
        row.val_loss = val;
        log.rows.push_back(row);
        consider_best(val);
      } else {
        log.rows.push_back(row);
      }
    }
  }

  if (!log.rows.empty() && !log.rows.back().val_loss.has_value()) {
    const double val = sft_loss(params, split.val);
    log.rows.back().val_loss = val;
    consider_best(val);
  }

  res.final_params = params;
  res.final_opt = opt;
  return res;
}

inline std::string train_log_csv(const TrainLog& log) {
  std::string out = "step,train_loss,val_loss\n";
  for (const TrainLogRow& row : log.rows) {
    out += std::to_string(row.step);
    out += ',';
    if (row.train_loss) out += std::to_string(*row.train_loss);
    out += ',';
    if (row.val_loss) out += std::to_string(*row.val_loss);
    out += '\n';
  }
  return out;
}

}  // namespace persogen
