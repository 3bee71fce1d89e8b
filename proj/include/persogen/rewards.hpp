#pragma once
// Reward composition. One cell layout serves both training rewards and the
// evaluation table: CTS/CIS/DIS against the golden item, the full relevance
// battery against history (plus PCS), CTS/CIS/DIS/LPIPS/SSIM/MS-SSIM against
// future items, and the unary aesthetics score. Cells are normalized to [0,1]
// and summed with unit weights into the composite reward.

#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "persogen/dataset.hpp"
#include "persogen/metrics.hpp"
#include "persogen/providers.hpp"

namespace persogen {

enum class MetricId { CTS, CIS, DIS, PCS, LPIPS, SSIM, MSSSIM, NIMA };
enum class TargetGroup { Golden, History, Future, None };

inline const char* metric_name(MetricId m) {
  switch (m) {
    case MetricId::CTS: return "CTS";
    case MetricId::CIS: return "CIS";
    case MetricId::DIS: return "DIS";
    case MetricId::PCS: return "PCS";
    case MetricId::LPIPS: return "LPIPS";
    case MetricId::SSIM: return "SSIM";
    case MetricId::MSSSIM: return "MS-SSIM";
    case MetricId::NIMA: return "NIMA";
  }
  return "?";
}

inline const char* group_name(TargetGroup g) {
  switch (g) {
    case TargetGroup::Golden: return "golden";
    case TargetGroup::History: return "history";
    case TargetGroup::Future: return "future";
    case TargetGroup::None: return "aesthetics";
  }
  return "?";
}

struct MetricCell {
  MetricId metric;
  TargetGroup group;
  auto operator<=>(const MetricCell&) const = default;
};

// every cell used by Table-style evaluation and the training reward
inline const std::vector<MetricCell>& reward_cell_layout() {
  static const std::vector<MetricCell> cells = {
      {MetricId::CTS, TargetGroup::Golden},    {MetricId::CIS, TargetGroup::Golden},
      {MetricId::DIS, TargetGroup::Golden},    {MetricId::CTS, TargetGroup::History},
      {MetricId::CIS, TargetGroup::History},   {MetricId::DIS, TargetGroup::History},
      {MetricId::PCS, TargetGroup::History},   {MetricId::LPIPS, TargetGroup::History},
      {MetricId::SSIM, TargetGroup::History},  {MetricId::MSSSIM, TargetGroup::History},
      {MetricId::CTS, TargetGroup::Future},    {MetricId::CIS, TargetGroup::Future},
      {MetricId::DIS, TargetGroup::Future},    {MetricId::LPIPS, TargetGroup::Future},
      {MetricId::SSIM, TargetGroup::Future},   {MetricId::MSSSIM, TargetGroup::Future},
      {MetricId::NIMA, TargetGroup::None},
  };
  return cells;
}

// true when the evaluation table reports the cell at 100x scale
inline bool metric_scaled_by_100(MetricId m) {
  return m == MetricId::LPIPS || m == MetricId::SSIM || m == MetricId::MSSSIM;
}

struct RewardBreakdown {
  std::map<MetricCell, double> raw;         // CTS-family in [0,100]; perceptual at unit scale
  std::map<MetricCell, double> normalized;  // each in [0,1]
  double composite = 0.0;
};

// Fixed affine maps into [0,1]. LPIPS takes the unit-scale distance.
inline double normalize_reward(MetricId metric, double raw) {
  if (!std::isfinite(raw)) throw std::invalid_argument("normalize_reward: non-finite value");
  auto clamp01 = [](double v) { return std::min(1.0, std::max(0.0, v)); };
  switch (metric) {
    case MetricId::CTS:
    case MetricId::CIS:
    case MetricId::DIS:
    case MetricId::PCS: return clamp01(raw / 100.0);
    case MetricId::SSIM:
    case MetricId::MSSSIM: return clamp01(raw);
    case MetricId::LPIPS: return clamp01(1.0 - clamp01(raw));
    case MetricId::NIMA: return clamp01((raw - 1.0) / 9.0);
  }
  throw std::invalid_argument("normalize_reward: unknown metric");
}

inline double aggregate_group(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("aggregate_group: empty group");
  return mean_of(values);
}

struct RewardScorer {
  virtual ~RewardScorer() = default;
  virtual RewardBreakdown score(const Sample& sample, const PixelImage& generated) const = 0;
};

// Scores generated images against a sample with the toy metric pipeline.
// Item-side quantities (decoded pixels, embeddings, perceptual features,
// profile text) are cached per item_id; items are immutable so entries never
// go stale.
class Scorer final : public RewardScorer {
 public:
  Scorer(Codebook cb, ProviderSet providers)
      : cb_(std::move(cb)), providers_(std::move(providers)) {
    providers_.require_complete();
  }

  const Codebook& codebook() const { return cb_; }
  const ProviderSet& providers() const { return providers_; }

  RewardBreakdown score(const Sample& sample, const PixelImage& generated) const override {
    RewardBreakdown out;

    const std::vector<double> gen_clip = providers_.clip->embed_image(generated);
    const std::vector<double> gen_dino = providers_.dino->embed_image(generated);
    const auto gen_feats = lpips_features(generated, providers_.lpips_bank);
    const std::vector<FeatureMap>* gen_feats_ptr = &gen_feats;

    auto group_items = [&](TargetGroup g) -> std::vector<const Item*> {
      std::vector<const Item*> items;
      if (g == TargetGroup::Golden) items.push_back(&sample.golden);
      if (g == TargetGroup::History)
        for (const Item& it : sample.history) items.push_back(&it);
      if (g == TargetGroup::Future)
        for (const Item& it : sample.future) items.push_back(&it);
      return items;
    };

    for (const MetricCell& cell : reward_cell_layout()) {
      if (cell.metric == MetricId::NIMA) {
        out.raw[cell] = providers_.aesthetics->score(generated);
        continue;
      }
      if (cell.metric == MetricId::PCS) {
        const std::vector<double>& prof = profile_embedding(sample);
        out.raw[cell] = clip_score(gen_clip, prof);
        continue;
      }
      const auto items = group_items(cell.group);
      if (items.empty()) continue;  // empty groups drop their cells entirely
      std::vector<double> values;
      values.reserve(items.size());
      for (const Item* it : items) {
        const ItemSide& side = item_side(*it);
        switch (cell.metric) {
          case MetricId::CTS: values.push_back(clip_score(gen_clip, side.text_emb)); break;
          case MetricId::CIS: values.push_back(clip_score(gen_clip, side.clip_emb)); break;
          case MetricId::DIS: values.push_back(clip_score(gen_dino, side.dino_emb)); break;
          case MetricId::LPIPS:
            values.push_back(perceptual_distance_from_features(*gen_feats_ptr, side.lpips));
            break;
          case MetricId::SSIM: values.push_back(ssim(generated, side.px)); break;
          case MetricId::MSSSIM: values.push_back(msssim(generated, side.px)); break;
          default: break;
        }
      }
      out.raw[cell] = aggregate_group(values);
    }

    for (const auto& [cell, raw] : out.raw) {
      const double norm = normalize_reward(cell.metric, raw);
      out.normalized[cell] = norm;
      out.composite += norm;
    }
    return out;
  }

  // warms the item caches so later scoring of this sample is read-only
  void prewarm(const Sample& sample) const {
    for (const Item& it : sample.history) item_side(it);
    item_side(sample.golden);
    for (const Item& it : sample.future) item_side(it);
    profile_embedding(sample);
  }

 private:
  struct ItemSide {
    PixelImage px;
    std::vector<double> clip_emb, dino_emb, text_emb;
    std::vector<FeatureMap> lpips;
  };

  static std::string item_text(const Item& it) {
    std::string s = it.title;
    for (const std::string& tag : it.tags) {
      if (!s.empty()) s += ' ';
      s += tag;
    }
    if (!it.intro.empty()) {
      if (!s.empty()) s += ' ';
      s += it.intro;
    }
    return s;
  }

  const ItemSide& item_side(const Item& it) const {
    std::lock_guard lk(mu_);
    auto found = item_cache_.find(it.item_id);
    if (found != item_cache_.end()) return found->second;
    ItemSide side;
    side.px = decode_image(it.image, cb_);
    side.clip_emb = providers_.clip->embed_image(side.px);
    side.dino_emb = providers_.dino->embed_image(side.px);
    side.text_emb = providers_.clip->embed_text(item_text(it));
    side.lpips = lpips_features(side.px, providers_.lpips_bank);
    return item_cache_.emplace(it.item_id, std::move(side)).first->second;
  }

  const std::vector<double>& profile_embedding(const Sample& sample) const {
    std::string key;
    for (const Item& it : sample.history) {
      key += it.item_id;
      key += '\x1f';
    }
    std::lock_guard lk(mu_);
    auto found = profile_cache_.find(key);
    if (found != profile_cache_.end()) return found->second;
    const std::string text = providers_.profile->profile(sample.history);
    return profile_cache_.emplace(key, providers_.clip->embed_text(text)).first->second;
  }

  Codebook cb_;
  ProviderSet providers_;
  mutable std::mutex mu_;
  mutable std::map<std::string, ItemSide> item_cache_;
  mutable std::map<std::string, std::vector<double>> profile_cache_;
};

inline RewardBreakdown composite_reward(const Sample& sample, const PixelImage& generated,
                                        const Codebook& cb, const ProviderSet& providers) {
  return Scorer(cb, providers).score(sample, generated);
}

}  // namespace persogen
