#pragma once
// Interaction logs -> windowed training samples: sliding-window construction,
// seeded 8:1:1 split, mask/swap augmentation and prompt rendering.

#include <algorithm>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "persogen/catalog.hpp"

namespace persogen {

struct InteractionRecord {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;

  bool operator==(const InteractionRecord&) const = default;
};

struct Sample {
  std::string user_id;
  std::vector<Item> history;  // window-1 items, chronological
  Item golden;                // the item actually interacted with next
  std::vector<Item> future;   // up to future_horizon items after the golden one
  int origin_window_index = 0;

  bool operator==(const Sample&) const = default;
};

struct SplitSet {
  std::vector<Sample> train, val, test;
  std::uint64_t seed = 0;
};

inline constexpr const char* kMaskItemId = "<mask>";

// Sentinel used by mask augmentation: empty text fields, all-zero token grid.
inline Item make_sentinel_item(int grid_w, int grid_h, const std::string& codebook_id) {
  Item it;
  it.item_id = kMaskItemId;
  it.image.grid_w = grid_w;
  it.image.grid_h = grid_h;
  it.image.codebook_id = codebook_id;
  it.image.tokens.assign(std::size_t(grid_w) * grid_h, 0);
  return it;
}

struct AugmentConfig {
  double mask_prob = 0.1;
  double swap_prob = 0.2;
  int copies_per_sample = 1;
  Item sentinel;
};

inline AugmentConfig make_augment_config(const SynthCatalog& cat, double mask_prob = 0.1,
                                         double swap_prob = 0.2, int copies = 1) {
  AugmentConfig cfg;
  cfg.mask_prob = mask_prob;
  cfg.swap_prob = swap_prob;
  cfg.copies_per_sample = copies;
  const TokenImage& proto = cat.items.front().image;
  cfg.sentinel = make_sentinel_item(proto.grid_w, proto.grid_h, proto.codebook_id);
  return cfg;
}

// Per user, after a chronological sort, every contiguous window of `window`
// interactions yields one sample: first window-1 as history, the last as the
// golden next item, then up to `future_horizon` interactions as the future.
inline std::vector<Sample> build_samples(const std::vector<InteractionRecord>& records,
                                         const std::vector<Item>& catalog,
                                         int window = 6, int future_horizon = 3) {
  if (window < 2) throw std::invalid_argument("build_samples: window must be >= 2");
  if (future_horizon < 0) throw std::invalid_argument("build_samples: negative horizon");
  std::map<std::string, const Item*> by_id;
  for (const Item& it : catalog) by_id[it.item_id] = &it;

  std::map<std::string, std::vector<InteractionRecord>> by_user;
  for (const InteractionRecord& r : records) {
    if (by_id.find(r.item_id) == by_id.end())
      throw std::invalid_argument("build_samples: unknown item " + r.item_id);
    by_user[r.user_id].push_back(r);
  }

  std::vector<Sample> out;
  for (auto& [user, recs] : by_user) {
    std::stable_sort(recs.begin(), recs.end(),
                     [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    const int n = int(recs.size());
    for (int s = 0; s + window <= n; ++s) {
      Sample sm;
      sm.user_id = user;
      sm.origin_window_index = s;
      for (int i = 0; i < window - 1; ++i)
        sm.history.push_back(*by_id.at(recs[std::size_t(s) + i].item_id));
      sm.golden = *by_id.at(recs[std::size_t(s) + window - 1].item_id);
      for (int f = 0; f < future_horizon && s + window + f < n; ++f)
        sm.future.push_back(*by_id.at(recs[std::size_t(s) + window + f].item_id));
      out.push_back(std::move(sm));
    }
  }
  return out;
}

// Seeded uniform shuffle, then 8:1:1 by floor; the remainder goes to test.
inline SplitSet split_samples(const std::vector<Sample>& samples, std::uint64_t seed) {
  if (samples.empty()) throw std::invalid_argument("split_samples: empty input");
  const std::size_t n = samples.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  SeededRng rng(derive_seed(seed, 0x5B117));
  for (std::size_t i = n - 1; i > 0; --i)
    std::swap(idx[i], idx[rng.uniform_int(i + 1)]);

  const std::size_t n_train = 8 * n / 10;  // floor(0.8 n)
  const std::size_t n_val = n / 10;        // floor(0.1 n)
  SplitSet out;
  out.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = samples[idx[i]];
    if (i < n_train)
      out.train.push_back(s);
    else if (i < n_train + n_val)
      out.val.push_back(s);
    else
      out.test.push_back(s);
  }
  return out;
}

// Mask each history position independently, then possibly swap one pair.
// Golden and future items are never touched. The rng stream shape is fixed
// (h mask draws, one swap draw, one pair draw when the swap fires) so a given
// seed always maps to the same decision sequence.
inline Sample augment(const Sample& sample, const AugmentConfig& cfg, SeededRng& rng) {
  Sample out = sample;
  const std::size_t h = out.history.size();
  for (std::size_t i = 0; i < h; ++i)
    if (rng.uniform01() < cfg.mask_prob) out.history[i] = cfg.sentinel;
  if (h >= 2 && rng.uniform01() < cfg.swap_prob) {
    const std::size_t pair = rng.uniform_int(h * (h - 1) / 2);
    std::size_t k = pair, i = 0;
    while (k >= h - 1 - i) {
      k -= h - 1 - i;
      ++i;
    }
    const std::size_t j = i + 1 + k;
    std::swap(out.history[i], out.history[j]);
  }
  return out;
}

inline std::string render_prompt(const Sample& sample, const std::string& template_id) {
  std::string noun, unit, field_tags, field_intro, verb_list;
  if (template_id == "movies") {
    noun = "movie poster";
    unit = "Movie";
    field_tags = "genres";
    field_intro = "intro";
    verb_list = "films";
  } else if (template_id == "videos") {
    noun = "video cover";
    unit = "Video";
    field_tags = "tag";
    field_intro = "description";
    verb_list = "videos";
  } else {
    throw std::invalid_argument("render_prompt: unknown template_id " + template_id);
  }
  std::string out = "Please generate a " + noun + " that would attract my interest. Here are the " +
                    (template_id == "movies" ? "movies" : "videos") + " I have watched:\n";
  for (std::size_t i = 0; i < sample.history.size(); ++i) {
    const Item& it = sample.history[i];
    std::string tags;
    for (std::size_t t = 0; t < it.tags.size(); ++t) {
      if (t) tags += ", ";
      tags += it.tags[t];
    }
    out += unit + " " + std::to_string(i + 1) + ": title: " + it.title + " " + field_tags +
           ": " + tags + " " + field_intro + ": " + it.intro + " image: <image_" +
           std::to_string(i + 1) + ">\n";
  }
  out += "Design a new " + noun + " inspired by the text and visual elements of these " +
         verb_list + ", making it appealing based on my viewing preferences.";
  return out;
}

// Synthetic interaction log: each user sticks to a home archetype with the
// given fidelity, otherwise picks uniformly. Timestamps are the event index.
inline std::vector<InteractionRecord> synth_interactions(std::uint64_t seed,
                                                         const SynthCatalog& cat,
                                                         int n_users, int events_per_user,
                                                         double fidelity = 0.85) {
  if (n_users <= 0 || events_per_user <= 0)
    throw std::invalid_argument("synth_interactions: need users and events");
  const int n_arch = int(cat.archetypes.size());
  std::vector<std::vector<std::size_t>> by_arch(n_arch);
  for (std::size_t i = 0; i < cat.items.size(); ++i)
    by_arch[cat.archetype_of[i]].push_back(i);

  SeededRng rng(derive_seed(seed, 0x1AC7));
  std::vector<InteractionRecord> out;
  out.reserve(std::size_t(n_users) * events_per_user);
  for (int u = 0; u < n_users; ++u) {
    const auto& home = by_arch[u % n_arch];
    for (int e = 0; e < events_per_user; ++e) {
      std::size_t pick;
      if (!home.empty() && rng.uniform01() < fidelity)
        pick = home[rng.uniform_int(home.size())];
      else
        pick = rng.uniform_int(cat.items.size());
      out.push_back({"u" + std::to_string(u), cat.items[pick].item_id, e});
    }
  }
  return out;
}

// ---- JSONL persistence -----------------------------------------------------

inline void save_interactions(const std::filesystem::path& path,
                              const std::vector<InteractionRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j{{"user_id", r.user_id}, {"item_id", r.item_id}, {"timestamp", r.timestamp}};
    out += j.dump();
    out += '\n';
  }
  atomic_write_file(path, out);
}

inline std::vector<InteractionRecord> load_interactions(const std::filesystem::path& path) {
  std::vector<InteractionRecord> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.at("user_id").get<std::string>(), j.at("item_id").get<std::string>(),
                   j.at("timestamp").get<std::int64_t>()});
  }
  return out;
}

inline void save_samples(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  std::string out;
  for (const Sample& s : samples) {
    std::vector<std::string> hist, fut;
    for (const Item& it : s.history) hist.push_back(it.item_id);
    for (const Item& it : s.future) fut.push_back(it.item_id);
    nlohmann::json j{{"user_id", s.user_id},
                     {"origin_window_index", s.origin_window_index},
                     {"history", hist},
                     {"golden", s.golden.item_id},
                     {"future", fut}};
    out += j.dump();
    out += '\n';
  }
  atomic_write_file(path, out);
}

inline std::vector<Sample> load_samples(const std::filesystem::path& path,
                                        const std::vector<Item>& catalog) {
  std::map<std::string, const Item*> by_id;
  for (const Item& it : catalog) by_id[it.item_id] = &it;
  auto resolve = [&](const std::string& id) -> Item {
    if (id == kMaskItemId && !catalog.empty()) {
      const TokenImage& proto = catalog.front().image;
      return make_sentinel_item(proto.grid_w, proto.grid_h, proto.codebook_id);
    }
    auto it = by_id.find(id);
    if (it == by_id.end()) throw std::runtime_error("samples: unknown item " + id);
    return *it->second;
  };
  std::vector<Sample> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    Sample s;
    s.user_id = j.at("user_id").get<std::string>();
    s.origin_window_index = j.at("origin_window_index").get<int>();
    for (const auto& id : j.at("history")) s.history.push_back(resolve(id.get<std::string>()));
    s.golden = resolve(j.at("golden").get<std::string>());
    for (const auto& id : j.at("future")) s.future.push_back(resolve(id.get<std::string>()));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace persogen
