#pragma once
// Embedding / aesthetics / profile providers. The toy implementations are
// deterministic stand-ins with the same shapes as the real services: image
// embeddings live in a token-histogram-plus-color space, text embeddings in
// the hashed-word slice of that same space, so cross-modal cosines are
// meaningful.

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "persogen/catalog.hpp"
#include "persogen/image.hpp"
#include "persogen/metrics.hpp"
#include "persogen/text.hpp"
#include "persogen/vecops.hpp"

namespace persogen {

struct EmbeddingProvider {
  virtual ~EmbeddingProvider() = default;
  virtual const std::string& id() const = 0;
  virtual std::vector<double> embed_image(const PixelImage& px) const = 0;
  virtual std::vector<double> embed_text(std::string_view text) const = 0;
};

struct AestheticsProvider {
  virtual ~AestheticsProvider() = default;
  virtual const std::string& id() const = 0;
  virtual double score(const PixelImage& px) const = 0;  // in [1,10]
};

struct ProfileProvider {
  virtual ~ProfileProvider() = default;
  virtual const std::string& id() const = 0;
  virtual std::string profile(std::span<const Item> history) const = 0;
};

// Image: nearest-codebook token histogram (optionally hash-scrambled), mean
// rgb and rgb stddev, L2-normalized. Text: hashed bag of words over the same
// histogram buckets, zero color slots. Dimension is V+6 either way.
class ToyEmbeddingProvider final : public EmbeddingProvider {
 public:
  ToyEmbeddingProvider(std::string id, Codebook cb, std::uint64_t bucket_salt)
      : id_(std::move(id)), cb_(std::move(cb)), bucket_salt_(bucket_salt) {}

  const std::string& id() const override { return id_; }

  std::vector<double> embed_image(const PixelImage& px) const override {
    const int V = cb_.vocab_size;
    std::vector<double> out(std::size_t(V) + 6, 0.0);
    const TokenImage toks = encode_image(px, cb_);
    for (int t : toks.tokens) out[bucket(t)] += 1.0 / double(toks.tokens.size());
    double mean[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
    const std::size_t n = px.pixel_count();
    for (std::size_t i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) {
        const double v = px.rgb[3 * i + c];
        mean[c] += v;
        sq[c] += v * v;
      }
    for (int c = 0; c < 3; ++c) {
      mean[c] /= double(n);
      const double var = std::max(0.0, sq[c] / double(n) - mean[c] * mean[c]);
      out[std::size_t(V) + c] = mean[c];
      out[std::size_t(V) + 3 + c] = std::sqrt(var);
    }
    l2_normalize(out);
    return out;
  }

  std::vector<double> embed_text(std::string_view text) const override {
    const int V = cb_.vocab_size;
    std::vector<double> out(std::size_t(V) + 6, 0.0);
    for (const std::string& w : tokenize_words(text))
      out[word_bucket(w, std::size_t(V), kTextEmbedSalt)] += 1.0;
    l2_normalize(out);
    return out;
  }

 private:
  std::size_t bucket(int token) const {
    if (bucket_salt_ == 0) return std::size_t(token);
    return std::size_t(mix64(bucket_salt_ ^ (std::uint64_t(token) * 0x9e3779b97f4a7c15ull)) %
                       std::uint64_t(cb_.vocab_size));
  }

  std::string id_;
  Codebook cb_;
  std::uint64_t bucket_salt_;
};

// aesthetics = 1 + 9 * clamp(2 * stddev(luma), 0, 1); a contrast heuristic
class ToyContrastAesthetics final : public AestheticsProvider {
 public:
  explicit ToyContrastAesthetics(std::string id = "toy-contrast") : id_(std::move(id)) {}
  const std::string& id() const override { return id_; }

  double score(const PixelImage& px) const override {
    const std::vector<double> luma = luma_plane(px);
    double mean = 0.0;
    for (double v : luma) mean += v;
    mean /= double(luma.size());
    double var = 0.0;
    for (double v : luma) var += (v - mean) * (v - mean);
    var /= double(luma.size());
    const double c = std::min(1.0, std::max(0.0, 2.0 * std::sqrt(var)));
    return 1.0 + 9.0 * c;
  }

 private:
  std::string id_;
};

// profile text = titles and tags of the history items, joined in order
class ToyJoinProfile final : public ProfileProvider {
 public:
  explicit ToyJoinProfile(std::string id = "toy-profile") : id_(std::move(id)) {}
  const std::string& id() const override { return id_; }

  std::string profile(std::span<const Item> history) const override {
    std::string out;
    for (const Item& it : history) {
      if (!it.title.empty()) {
        if (!out.empty()) out += ' ';
        out += it.title;
      }
      for (const std::string& tag : it.tags) {
        if (!out.empty()) out += ' ';
        out += tag;
      }
    }
    return out;
  }

 private:
  std::string id_;
};

// One provider per role plus the fixed perceptual feature bank.
struct ProviderSet {
  std::shared_ptr<const EmbeddingProvider> clip;
  std::shared_ptr<const EmbeddingProvider> dino;
  std::shared_ptr<const AestheticsProvider> aesthetics;
  std::shared_ptr<const ProfileProvider> profile;
  ConvBank lpips_bank;

  void require_complete() const {
    if (!clip || !dino || !aesthetics || !profile)
      throw std::invalid_argument("providers: a required role is missing");
  }
};

inline std::shared_ptr<const EmbeddingProvider> make_embedding_provider(
    const std::string& provider_id, const Codebook& cb) {
  if (provider_id == "toy-clip")
    return std::make_shared<ToyEmbeddingProvider>("toy-clip", cb, 0);
  if (provider_id == "toy-dino")
    return std::make_shared<ToyEmbeddingProvider>("toy-dino", cb, 0xD1D0);
  throw std::invalid_argument("unknown embedding provider: " + provider_id);
}

inline std::shared_ptr<const AestheticsProvider> make_aesthetics_provider(
    const std::string& provider_id) {
  if (provider_id == "toy-contrast") return std::make_shared<ToyContrastAesthetics>();
  throw std::invalid_argument("unknown aesthetics provider: " + provider_id);
}

inline std::shared_ptr<const ProfileProvider> make_profile_provider(
    const std::string& provider_id) {
  if (provider_id == "toy-profile") return std::make_shared<ToyJoinProfile>();
  throw std::invalid_argument("unknown profile provider: " + provider_id);
}

inline ProviderSet make_providers(const Codebook& cb, const std::string& clip_id = "toy-clip",
                                  const std::string& dino_id = "toy-dino",
                                  const std::string& aesthetics_id = "toy-contrast",
                                  const std::string& profile_id = "toy-profile",
                                  std::uint64_t bank_seed = 3) {
  ProviderSet p;
  p.clip = make_embedding_provider(clip_id, cb);
  p.dino = make_embedding_provider(dino_id, cb);
  p.aesthetics = make_aesthetics_provider(aesthetics_id);
  p.profile = make_profile_provider(profile_id);
  p.lpips_bank = make_conv_bank(bank_seed);
  return p;
}

}  // namespace persogen
