#pragma once
// Token-grid images, the fixed toy VQ codebook and pixel-space decode/encode.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "persogen/rng.hpp"

namespace persogen {

struct PixelImage {
  int width = 0, height = 0;
  std::vector<double> rgb;  // interleaved r,g,b per pixel, row-major, values in [0,1]

  std::size_t pixel_count() const { return std::size_t(width) * std::size_t(height); }
  double r(int x, int y) const { return rgb[3 * (std::size_t(y) * width + x) + 0]; }
  double g(int x, int y) const { return rgb[3 * (std::size_t(y) * width + x) + 1]; }
  double b(int x, int y) const { return rgb[3 * (std::size_t(y) * width + x) + 2]; }
  // ITU-R BT.601
  double luma(int x, int y) const { return 0.299 * r(x, y) + 0.587 * g(x, y) + 0.114 * b(x, y); }

  bool operator==(const PixelImage&) const = default;
};

inline std::vector<double> luma_plane(const PixelImage& img) {
  std::vector<double> out(img.pixel_count());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out[std::size_t(y) * img.width + x] = img.luma(x, y);
  return out;
}

struct Codebook {
  std::string codebook_id;
  std::uint64_t seed = 0;
  int vocab_size = 0;  // V
  int patch_side = 0;  // P
  std::vector<double> patches;  // V * P*P*3, per patch row-major interleaved rgb

  std::size_t patch_values() const { return std::size_t(patch_side) * patch_side * 3; }
  const double* patch(int v) const { return patches.data() + std::size_t(v) * patch_values(); }

  bool operator==(const Codebook&) const = default;
};

struct TokenImage {
  int grid_w = 0, grid_h = 0;
  std::vector<int> tokens;  // grid_w*grid_h entries, row-major, each in [0, V)
  std::string codebook_id;

  std::size_t length() const { return tokens.size(); }
  bool operator==(const TokenImage&) const = default;
};

namespace detail {
inline double patch_dist2(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}
}  // namespace detail

// Patches are iid uniform draws, mutually repelled: a candidate closer than
// kMinPatchDist (L2) to an existing patch is redrawn. This keeps the encode
// of any decoded image unambiguous.
inline constexpr double kMinPatchDist = 0.05;

inline Codebook make_codebook(std::uint64_t seed, int vocab_size = 64, int patch_side = 4) {
  if (vocab_size < 2) throw std::invalid_argument("make_codebook: vocab_size must be >= 2");
  if (patch_side < 1) throw std::invalid_argument("make_codebook: patch_side must be >= 1");
  Codebook cb;
  cb.seed = seed;
  cb.vocab_size = vocab_size;
  cb.patch_side = patch_side;
  cb.codebook_id = "toy-vq-s" + std::to_string(seed) + "-v" + std::to_string(vocab_size) +
                   "-p" + std::to_string(patch_side);
  const std::size_t n = cb.patch_values();
  cb.patches.resize(std::size_t(vocab_size) * n);
  SeededRng rng(derive_seed(seed, 0xC0DEB00C));
  std::vector<double> cand(n);
  for (int v = 0; v < vocab_size; ++v) {
    int attempts = 0;
    for (;;) {
      if (++attempts > 100000)
        throw std::runtime_error("make_codebook: cannot place mutually distinct patches");
      for (double& x : cand) x = rng.uniform01();
      bool ok = true;
      for (int u = 0; u < v && ok; ++u)
        ok = detail::patch_dist2(cand.data(), cb.patch(u), n) >= kMinPatchDist * kMinPatchDist;
      if (ok) break;
    }
    std::copy(cand.begin(), cand.end(), cb.patches.begin() + std::size_t(v) * n);
  }
  return cb;
}

inline void validate_codebook(const Codebook& cb) {
  if (cb.vocab_size < 2) throw std::invalid_argument("codebook: vocab_size must be >= 2");
  if (cb.patch_side < 1) throw std::invalid_argument("codebook: patch_side must be >= 1");
  if (cb.patches.size() != std::size_t(cb.vocab_size) * cb.patch_values())
    throw std::invalid_argument("codebook: patch tensor size mismatch");
  for (double x : cb.patches)
    if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("codebook: patch value outside [0,1]");
  const std::size_t n = cb.patch_values();
  for (int v = 0; v < cb.vocab_size; ++v)
    for (int u = 0; u < v; ++u)
      if (detail::patch_dist2(cb.patch(v), cb.patch(u), n) <= 0.0)
        throw std::invalid_argument("codebook: duplicate patches");
}

inline PixelImage decode_image(const TokenImage& img, const Codebook& cb) {
  if (img.codebook_id != cb.codebook_id)
    throw std::invalid_argument("decode_image: codebook mismatch (" + img.codebook_id +
                                " vs " + cb.codebook_id + ")");
  if (img.tokens.size() != std::size_t(img.grid_w) * img.grid_h)
    throw std::invalid_argument("decode_image: token count does not match grid");
  const int P = cb.patch_side;
  PixelImage out;
  out.width = img.grid_w * P;
  out.height = img.grid_h * P;
  out.rgb.resize(out.pixel_count() * 3);
  for (int gy = 0; gy < img.grid_h; ++gy) {
    for (int gx = 0; gx < img.grid_w; ++gx) {
      const int tok = img.tokens[std::size_t(gy) * img.grid_w + gx];
      if (tok < 0 || tok >= cb.vocab_size)
        throw std::invalid_argument("decode_image: token index out of range");
      const double* p = cb.patch(tok);
      for (int py = 0; py < P; ++py) {
        const int y = gy * P + py;
        for (int px = 0; px < P; ++px) {
          const int x = gx * P + px;
          const std::size_t src = 3 * (std::size_t(py) * P + px);
          const std::size_t dst = 3 * (std::size_t(y) * out.width + x);
          out.rgb[dst + 0] = p[src + 0];
          out.rgb[dst + 1] = p[src + 1];
          out.rgb[dst + 2] = p[src + 2];
        }
      }
    }
  }
  return out;
}

// Nearest codebook patch per P-by-P block, L2 over rgb; ties go to the lowest index.
inline TokenImage encode_image(const PixelImage& px, const Codebook& cb) {
  const int P = cb.patch_side;
  if (px.width % P != 0 || px.height % P != 0)
    throw std::invalid_argument("encode_image: image dimensions must be multiples of patch_side");
  TokenImage out;
  out.grid_w = px.width / P;
  out.grid_h = px.height / P;
  out.codebook_id = cb.codebook_id;
  out.tokens.resize(std::size_t(out.grid_w) * out.grid_h);
  const std::size_t n = cb.patch_values();
  std::vector<double> block(n);
  for (int gy = 0; gy < out.grid_h; ++gy) {
    for (int gx = 0; gx < out.grid_w; ++gx) {
      for (int py = 0; py < P; ++py) {
        const int y = gy * P + py;
        for (int pxi = 0; pxi < P; ++pxi) {
          const int x = gx * P + pxi;
          const std::size_t src = 3 * (std::size_t(y) * px.width + x);
          const std::size_t dst = 3 * (std::size_t(py) * P + pxi);
          block[dst + 0] = px.rgb[src + 0];
          block[dst + 1] = px.rgb[src + 1];
          block[dst + 2] = px.rgb[src + 2];
        }
      }
      int best = 0;
      double best_d = detail::patch_dist2(block.data(), cb.patch(0), n);
      for (int v = 1; v < cb.vocab_size; ++v) {
        const double d = detail::patch_dist2(block.data(), cb.patch(v), n);
        if (d < best_d) {
          best_d = d;
          best = v;
        }
      }
      out.tokens[std::size_t(gy) * out.grid_w + gx] = best;
    }
  }
  return out;
}

}  // namespace persogen
