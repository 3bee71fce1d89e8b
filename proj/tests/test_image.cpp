#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numeric>

#include "persogen/catalog.hpp"
#include "persogen/image.hpp"

using namespace persogen;

namespace {

TokenImage make_tokens(const Codebook& cb, int gw, int gh, std::vector<int> toks) {
  TokenImage t;
  t.grid_w = gw;
  t.grid_h = gh;
  t.tokens = std::move(toks);
  t.codebook_id = cb.codebook_id;
  return t;
}

double pixel_sum(const PixelImage& px) {
  return std::accumulate(px.rgb.begin(), px.rgb.end(), 0.0);
}

// handmade codebook with dyadic patch values; safe for exact-tie tests
Codebook dyadic_codebook() {
  Codebook cb;
  cb.codebook_id = "dyadic";
  cb.seed = 0;
  cb.vocab_size = 8;
  cb.patch_side = 2;
  const double levels[8] = {0.0, 0.0625, 0.25, 0.125, 0.9375, 0.875, 0.75, 1.0};
  for (double v : levels)
    for (int i = 0; i < 12; ++i) cb.patches.push_back(v);
  return cb;
}

}  // namespace

TEST_SUITE("image") {

TEST_CASE("decode tiles patch 0 when all tokens are zero") {
  const Codebook cb = make_codebook(1, 16, 3);
  const TokenImage t = make_tokens(cb, 2, 2, {0, 0, 0, 0});
  const PixelImage px = decode_image(t, cb);
  CHECK(px.width == 6);
  CHECK(px.height == 6);
  for (int y = 0; y < px.height; ++y)
    for (int x = 0; x < px.width; ++x) {
      const double* p = cb.patch(0);
      const std::size_t src = 3 * (std::size_t(y % 3) * 3 + (x % 3));
      CHECK(px.r(x, y) == p[src + 0]);
      CHECK(px.g(x, y) == p[src + 1]);
      CHECK(px.b(x, y) == p[src + 2]);
    }
}

TEST_CASE("encode(decode(t)) is the identity on token images") {
  const Codebook cb = make_codebook(42);
  SeededRng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> toks(64);
    for (auto& t : toks) t = int(rng.uniform_int(cb.vocab_size));
    const TokenImage img = make_tokens(cb, 8, 8, toks);
    CHECK(encode_image(decode_image(img, cb), cb) == img);
  }
}

TEST_CASE("seed-7 codebook decode checksum matches independent tiling") {
  const Codebook cb = make_codebook(7);
  const TokenImage t = make_tokens(cb, 2, 2, {3, 1, 4, 1});
  // oracle: the decoded sum is the sum of the four referenced patches
  double expected = 0.0;
  for (int tok : {3, 1, 4, 1})
    for (std::size_t i = 0; i < cb.patch_values(); ++i) expected += cb.patch(tok)[i];
  CHECK(pixel_sum(decode_image(t, cb)) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("decode rejects codebook mismatch and bad tokens") {
  const Codebook cb = make_codebook(3, 8, 2);
  TokenImage t = make_tokens(cb, 1, 1, {0});
  t.codebook_id = "other";
  CHECK_THROWS_AS(decode_image(t, cb), std::invalid_argument);
  TokenImage bad = make_tokens(cb, 1, 1, {8});
  CHECK_THROWS_AS(decode_image(bad, cb), std::invalid_argument);
}

TEST_CASE("encode maps a tiling of patch 5 to all-5 tokens") {
  const Codebook cb = make_codebook(11, 16, 4);
  const TokenImage t = make_tokens(cb, 3, 2, {5, 5, 5, 5, 5, 5});
  const TokenImage back = encode_image(decode_image(t, cb), cb);
  for (int tok : back.tokens) CHECK(tok == 5);
}

TEST_CASE("encode rejects dimensions that are not patch multiples") {
  const Codebook cb = make_codebook(5, 8, 4);
  PixelImage px;
  px.width = 6;
  px.height = 4;
  px.rgb.assign(px.pixel_count() * 3, 0.5);
  CHECK_THROWS_AS(encode_image(px, cb), std::invalid_argument);
}

TEST_CASE("encode tie between patches 2 and 6 resolves to the lower index") {
  const Codebook cb = dyadic_codebook();
  // block exactly midway between patch 2 (all 0.25) and patch 6 (all 0.75)
  PixelImage px;
  px.width = 2;
  px.height = 2;
  px.rgb.assign(12, 0.5);
  const TokenImage t = encode_image(px, cb);
  CHECK(t.tokens == std::vector<int>{2});
}

TEST_CASE("decoded pixels stay in [0,1]") {
  const Codebook cb = make_codebook(99);
  SeededRng rng(5);
  std::vector<int> toks(64);
  for (auto& t : toks) t = int(rng.uniform_int(cb.vocab_size));
  const PixelImage px = decode_image(make_tokens(cb, 8, 8, toks), cb);
  for (double v : px.rgb) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("codebook patches are mutually repelled") {
  const Codebook cb = make_codebook(13, 32, 4);
  const std::size_t n = cb.patch_values();
  for (int v = 0; v < cb.vocab_size; ++v)
    for (int u = 0; u < v; ++u) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = cb.patch(v)[i] - cb.patch(u)[i];
        d2 += d * d;
      }
      CHECK(d2 >= kMinPatchDist * kMinPatchDist);
    }
}

TEST_CASE("synth_catalog is deterministic in its seed") {
  const SynthCatalog a = synth_catalog(21, 24, 3);
  const SynthCatalog b = synth_catalog(21, 24, 3);
  CHECK(a.codebook == b.codebook);
  CHECK(a.items == b.items);
  CHECK(a.archetype_of == b.archetype_of);
  const SynthCatalog c = synth_catalog(22, 24, 3);
  CHECK(a.items != c.items);
}

TEST_CASE("single archetype shares one tag vocabulary") {
  const SynthCatalog cat = synth_catalog(4, 10, 1);
  const auto& words = cat.archetypes[0].words;
  for (const Item& it : cat.items)
    for (const std::string& tag : it.tags)
      CHECK(std::find(words.begin(), words.end(), tag) != words.end());
}

TEST_CASE("archetypes separate in token-histogram space") {
  const SynthCatalog cat = synth_catalog(17, 100, 4);
  const int V = cat.codebook.vocab_size;
  auto histogram = [&](const Item& it) {
    std::vector<double> h(V, 0.0);
    for (int t : it.image.tokens) h[t] += 1.0 / double(it.image.tokens.size());
    return h;
  };
  auto dist = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (int v = 0; v < V; ++v) s += (a[v] - b[v]) * (a[v] - b[v]);
    return std::sqrt(s);
  };
  std::vector<std::vector<double>> hists;
  for (const Item& it : cat.items) hists.push_back(histogram(it));
  double within = 0.0, between = 0.0;
  int n_within = 0, n_between = 0;
  for (std::size_t i = 0; i < hists.size(); ++i)
    for (std::size_t j = i + 1; j < hists.size(); ++j) {
      if (cat.archetype_of[i] == cat.archetype_of[j]) {
        within += dist(hists[i], hists[j]);
        ++n_within;
      } else {
        between += dist(hists[i], hists[j]);
        ++n_between;
      }
    }
  CHECK(within / n_within < between / n_between);
}

TEST_CASE("synth_catalog rejects degenerate arguments") {
  CHECK_THROWS_AS(synth_catalog(1, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(synth_catalog(1, 3, 4), std::invalid_argument);
  CHECK_THROWS_AS(synth_catalog(1, 3, 0), std::invalid_argument);
}

TEST_CASE("codebook and catalog files round-trip bit-exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "persogen_image_test";
  std::filesystem::create_directories(dir);
  const SynthCatalog cat = synth_catalog(31, 12, 2);
  save_codebook(dir / "cb.json", cat.codebook);
  save_catalog(dir / "items.jsonl", cat.items);
  CHECK(load_codebook(dir / "cb.json") == cat.codebook);
  CHECK(load_catalog(dir / "items.jsonl", cat.codebook) == cat.items);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
