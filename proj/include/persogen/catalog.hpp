#pragma once
// Item data model, archetype-structured synthetic catalog, JSON persistence.
//
// Each archetype owns a small token support set and a word vocabulary whose
// hash buckets land inside that support, so text and image similarities of
// same-archetype items correlate and there is something for a policy to learn.

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "persogen/image.hpp"
#include "persogen/io.hpp"
#include "persogen/rng.hpp"
#include "persogen/text.hpp"

namespace persogen {

struct Item {
  std::string item_id;
  std::string title;
  std::vector<std::string> tags;
  std::string intro;
  TokenImage image;

  bool operator==(const Item&) const = default;
};

struct Archetype {
  std::vector<int> support;          // token subset the archetype concentrates on
  std::vector<double> token_probs;   // full-vocabulary sampling distribution
  std::vector<std::string> words;    // tag/title vocabulary, buckets inside support
};

struct SynthCatalog {
  Codebook codebook;
  std::vector<Item> items;
  std::vector<int> archetype_of;  // item index -> archetype index
  std::vector<Archetype> archetypes;
};

namespace detail {

inline std::string random_word(SeededRng& rng) {
  const std::size_t len = 4 + rng.uniform_int(5);
  std::string w(len, 'a');
  for (auto& c : w) c = char('a' + rng.uniform_int(26));
  return w;
}

inline int sample_from_cdf(const std::vector<double>& cdf, SeededRng& rng) {
  const double u = rng.uniform01();
  for (std::size_t i = 0; i < cdf.size(); ++i)
    if (u < cdf[i]) return int(i);
  return int(cdf.size()) - 1;
}

}  // namespace detail

inline SynthCatalog synth_catalog(std::uint64_t seed, int n_items, int n_archetypes,
                                  int grid_w = 8, int grid_h = 8,
                                  int vocab_size = 64, int patch_side = 4) {
  if (n_items <= 0) throw std::invalid_argument("synth_catalog: need at least one item");
  if (n_archetypes < 1) throw std::invalid_argument("synth_catalog: need at least one archetype");
  if (n_items < n_archetypes)
    throw std::invalid_argument("synth_catalog: fewer items than archetypes");

  SynthCatalog out;
  out.codebook = make_codebook(derive_seed(seed, 0xCB), vocab_size, patch_side);
  SeededRng rng(derive_seed(seed, 0xCA7A106));
  const int V = vocab_size;
  const std::size_t L = std::size_t(grid_w) * grid_h;

  // disjoint supports from a shuffled vocabulary (wrapping when V is tight)
  std::vector<int> perm(V);
  for (int v = 0; v < V; ++v) perm[v] = v;
  for (int v = V - 1; v > 0; --v)
    std::swap(perm[v], perm[rng.uniform_int(std::uint64_t(v) + 1)]);
  const int support_size = std::max(1, std::min(8, V / n_archetypes));

  out.archetypes.resize(n_archetypes);
  for (int a = 0; a < n_archetypes; ++a) {
    Archetype& arch = out.archetypes[a];
    std::set<int> sup;
    for (int s = 0; s < support_size; ++s)
      sup.insert(perm[(std::size_t(a) * support_size + s) % V]);
    arch.support.assign(sup.begin(), sup.end());
    // 0.95 of the mass on the support, 0.05 spread over the whole vocabulary
    arch.token_probs.assign(V, 0.05 / V);
    for (int t : arch.support) arch.token_probs[t] += 0.95 / double(arch.support.size());

    std::set<std::string> seen;
    int attempts = 0;
    while (int(arch.words.size()) < 8) {
      if (++attempts > 200000)
        throw std::runtime_error("synth_catalog: could not plant archetype words");
      std::string w = detail::random_word(rng);
      if (!seen.insert(w).second) continue;
      if (sup.count(int(word_bucket(w, std::size_t(V), kTextEmbedSalt))) > 0)
        arch.words.push_back(std::move(w));
    }
  }

  out.items.reserve(n_items);
  out.archetype_of.reserve(n_items);
  for (int i = 0; i < n_items; ++i) {
    const int a = i % n_archetypes;
    const Archetype& arch = out.archetypes[a];
    std::vector<double> cdf(V);
    double acc = 0.0;
    for (int v = 0; v < V; ++v) {
      acc += arch.token_probs[v];
      cdf[v] = acc;
    }
    Item it;
    it.item_id = "it" + std::to_string(i);
    it.image.grid_w = grid_w;
    it.image.grid_h = grid_h;
    it.image.codebook_id = out.codebook.codebook_id;
    it.image.tokens.resize(L);
    for (auto& t : it.image.tokens) t = detail::sample_from_cdf(cdf, rng);
    // three distinct words as tags, two more in the title, three in the intro
    std::vector<std::string> pool = arch.words;
    for (std::size_t w = pool.size() - 1; w > 0; --w)
      std::swap(pool[w], pool[rng.uniform_int(w + 1)]);
    it.tags = {pool[0], pool[1], pool[2]};
    it.title = pool[3] + " " + pool[4] + " #" + std::to_string(i);
    it.intro = "A story about " + pool[5] + ", " + pool[6] + " and " + pool[7] + ".";
    out.items.push_back(std::move(it));
    out.archetype_of.push_back(a);
  }
  return out;
}

// ---- JSON persistence ----------------------------------------------------

inline nlohmann::json token_image_to_json(const TokenImage& img) {
  return nlohmann::json{{"grid_w", img.grid_w},
                        {"grid_h", img.grid_h},
                        {"tokens", img.tokens},
                        {"codebook_id", img.codebook_id}};
}

inline TokenImage token_image_from_json(const nlohmann::json& j) {
  TokenImage img;
  img.grid_w = j.at("grid_w").get<int>();
  img.grid_h = j.at("grid_h").get<int>();
  img.tokens = j.at("tokens").get<std::vector<int>>();
  img.codebook_id = j.at("codebook_id").get<std::string>();
  if (img.tokens.size() != std::size_t(img.grid_w) * img.grid_h)
    throw std::runtime_error("token image: token count does not match grid");
  return img;
}

inline void save_codebook(const std::filesystem::path& path, const Codebook& cb) {
  nlohmann::json j;
  j["codebook_id"] = cb.codebook_id;
  j["seed"] = cb.seed;
  j["vocab_size"] = cb.vocab_size;
  j["patch_side"] = cb.patch_side;
  auto patches = nlohmann::json::array();
  for (int v = 0; v < cb.vocab_size; ++v)
    patches.push_back(std::vector<double>(cb.patch(v), cb.patch(v) + cb.patch_values()));
  j["patches"] = std::move(patches);
  atomic_write_file(path, j.dump());
}

inline Codebook load_codebook(const std::filesystem::path& path) {
  const auto j = nlohmann::json::parse(read_file(path));
  Codebook cb;
  cb.codebook_id = j.at("codebook_id").get<std::string>();
  cb.seed = j.at("seed").get<std::uint64_t>();
  cb.vocab_size = j.at("vocab_size").get<int>();
  cb.patch_side = j.at("patch_side").get<int>();
  for (const auto& p : j.at("patches")) {
    const auto vals = p.get<std::vector<double>>();
    cb.patches.insert(cb.patches.end(), vals.begin(), vals.end());
  }
  validate_codebook(cb);
  return cb;
}

inline void save_catalog(const std::filesystem::path& path, const std::vector<Item>& items) {
  std::string out;
  for (const Item& it : items) {
    nlohmann::json j{{"item_id", it.item_id},
                     {"title", it.title},
                     {"tags", it.tags},
                     {"intro", it.intro},
                     {"image", token_image_to_json(it.image)}};
    out += j.dump();
    out += '\n';
  }
  atomic_write_file(path, out);
}

inline std::vector<Item> load_catalog(const std::filesystem::path& path, const Codebook& cb) {
  std::vector<Item> items;
  std::istringstream in(read_file(path));
  std::string line;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    Item it;
    it.item_id = j.at("item_id").get<std::string>();
    it.title = j.at("title").get<std::string>();
    it.tags = j.at("tags").get<std::vector<std::string>>();
    it.intro = j.at("intro").get<std::string>();
    it.image = token_image_from_json(j.at("image"));
    if (it.image.codebook_id != cb.codebook_id)
      throw std::runtime_error("catalog: item " + it.item_id + " references unknown codebook");
    for (int t : it.image.tokens)
      if (t < 0 || t >= cb.vocab_size)
        throw std::runtime_error("catalog: item " + it.item_id + " has token out of range");
    if (!ids.insert(it.item_id).second)
      throw std::runtime_error("catalog: duplicate item_id " + it.item_id);
    items.push_back(std::move(it));
  }
  return items;
}

}  // namespace persogen
