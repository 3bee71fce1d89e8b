#pragma once
// Similarity metrics: windowed SSIM on luma, 3-scale MS-SSIM, an LPIPS-style
// distance over a fixed seeded convolution bank, and the clamped-cosine score.

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "persogen/image.hpp"
#include "persogen/rng.hpp"
#include "persogen/vecops.hpp"

namespace persogen {

// 100 * max(0, cosine); zero vectors score 0.
inline double clip_score(std::span<const double> e1, std::span<const double> e2) {
  if (e1.size() != e2.size()) throw std::invalid_argument("clip_score: dimension mismatch");
  const double n1 = l2_norm(e1), n2 = l2_norm(e2);
  if (n1 == 0.0 || n2 == 0.0) return 0.0;
  const double c = dot(e1, e2) / (n1 * n2);
  return 100.0 * std::max(0.0, c);
}

inline constexpr int kSsimWindow = 7;
inline constexpr double kSsimC1 = 0.01 * 0.01;  // on [0,1] luma
inline constexpr double kSsimC2 = 0.03 * 0.03;

namespace detail {

struct Plane {
  int width = 0, height = 0;
  std::vector<double> v;
  double at(int x, int y) const { return v[std::size_t(y) * width + x]; }
};

inline Plane luma_of(const PixelImage& img) {
  return Plane{img.width, img.height, luma_plane(img)};
}

// window means of luminance, contrast-structure and their product
struct SsimStats {
  double l = 0.0, cs = 0.0, lcs = 0.0;
};

inline SsimStats ssim_stats(const Plane& a, const Plane& b) {
  const int W = kSsimWindow;
  if (a.width < W || a.height < W)
    throw std::invalid_argument("ssim: image smaller than the sliding window");
  const double n = double(W) * W;
  SsimStats acc;
  std::size_t windows = 0;
  for (int y = 0; y + W <= a.height; ++y) {
    for (int x = 0; x + W <= a.width; ++x) {
      double s1 = 0, s2 = 0, s11 = 0, s22 = 0, s12 = 0;
      for (int wy = 0; wy < W; ++wy)
        for (int wx = 0; wx < W; ++wx) {
          const double pa = a.at(x + wx, y + wy);
          const double pb = b.at(x + wx, y + wy);
          s1 += pa;
          s2 += pb;
          s11 += pa * pa;
          s22 += pb * pb;
          s12 += pa * pb;
        }
      const double m1 = s1 / n, m2 = s2 / n;
      const double v1 = s11 / n - m1 * m1;
      const double v2 = s22 / n - m2 * m2;
      const double v12 = s12 / n - m1 * m2;
      const double l = (2.0 * m1 * m2 + kSsimC1) / (m1 * m1 + m2 * m2 + kSsimC1);
      const double cs = (2.0 * v12 + kSsimC2) / (v1 + v2 + kSsimC2);
      acc.l += l;
      acc.cs += cs;
      acc.lcs += l * cs;
      ++windows;
    }
  }
  acc.l /= double(windows);
  acc.cs /= double(windows);
  acc.lcs /= double(windows);
  return acc;
}

// 2x2 mean pool; odd trailing rows/columns are dropped
inline Plane downsample2(const Plane& p) {
  Plane out;
  out.width = p.width / 2;
  out.height = p.height / 2;
  out.v.resize(std::size_t(out.width) * out.height);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      out.v[std::size_t(y) * out.width + x] =
          (p.at(2 * x, 2 * y) + p.at(2 * x + 1, 2 * y) + p.at(2 * x, 2 * y + 1) +
           p.at(2 * x + 1, 2 * y + 1)) /
          4.0;
  return out;
}

inline void require_same_dims(const PixelImage& a, const PixelImage& b, const char* what) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

}  // namespace detail

// Uniform 7x7 sliding window, stride 1, C1=(0.01)^2, C2=(0.03)^2 on [0,1] luma.
inline double ssim(const PixelImage& a, const PixelImage& b) {
  detail::require_same_dims(a, b, "ssim");
  return detail::ssim_stats(detail::luma_of(a), detail::luma_of(b)).lcs;
}

// first three standard exponents, renormalized to sum 1
inline constexpr double kMsssimRawWeights[3] = {0.0448, 0.2856, 0.3001};

// Contrast-structure at scales 1..3 plus luminance at scale 3; 2x2 mean-pool
// between scales. Needs at least 28x28 input so the coarsest scale still fits
// the 7x7 window.
inline double msssim(const PixelImage& a, const PixelImage& b) {
  detail::require_same_dims(a, b, "msssim");
  if (a.width / 4 < kSsimWindow || a.height / 4 < kSsimWindow)
    throw std::invalid_argument("msssim: image too small for 3 dyadic scales");
  const double wsum = kMsssimRawWeights[0] + kMsssimRawWeights[1] + kMsssimRawWeights[2];
  detail::Plane pa = detail::luma_of(a);
  detail::Plane pb = detail::luma_of(b);
  double value = 1.0;
  for (int scale = 0; scale < 3; ++scale) {
    if (scale > 0) {
      pa = detail::downsample2(pa);
      pb = detail::downsample2(pb);
    }
    const detail::SsimStats st = detail::ssim_stats(pa, pb);
    const double w = kMsssimRawWeights[scale] / wsum;
    value *= std::pow(std::max(st.cs, 0.0), w);
    if (scale == 2) value *= std::pow(std::max(st.l, 0.0), w);
  }
  return value;
}

// ---- LPIPS-style distance --------------------------------------------------

// Fixed stack of seeded 3x3 stride-2 convolutions with rectification. A
// structural stand-in for a pretrained feature network; not calibrated to
// LPIPS proper.
struct ConvBank {
  std::uint64_t seed = 0;
  int n_layers = 3;
  int n_filters = 8;
  int ksize = 3;
  int stride = 2;
  // per layer: out_c * in_c * k * k, out-major
  std::vector<std::vector<double>> weights;
};

inline ConvBank make_conv_bank(std::uint64_t seed) {
  ConvBank bank;
  bank.seed = seed;
  SeededRng rng(derive_seed(seed, 0x10195));
  int in_c = 3;
  for (int layer = 0; layer < bank.n_layers; ++layer) {
    const std::size_t fan_in = std::size_t(bank.ksize) * bank.ksize * in_c;
    std::vector<double> w(std::size_t(bank.n_filters) * fan_in);
    const double scale = 1.0 / std::sqrt(double(fan_in));
    for (double& x : w) x = rng.normal() * scale;
    bank.weights.push_back(std::move(w));
    in_c = bank.n_filters;
  }
  return bank;
}

struct FeatureMap {
  int channels = 0, width = 0, height = 0;
  std::vector<double> data;  // [c][y][x]
  double& at(int c, int y, int x) {
    return data[(std::size_t(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(std::size_t(c) * height + y) * width + x];
  }
};

namespace detail {

inline FeatureMap conv_relu(const FeatureMap& in, const std::vector<double>& w, int out_c,
                            int k, int stride) {
  FeatureMap out;
  out.channels = out_c;
  out.width = (in.width - k) / stride + 1;
  out.height = (in.height - k) / stride + 1;
  if (out.width < 1 || out.height < 1)
    throw std::invalid_argument("perceptual_distance: image too small for the bank");
  out.data.assign(std::size_t(out_c) * out.width * out.height, 0.0);
  const std::size_t fan_in = std::size_t(k) * k * in.channels;
  for (int oc = 0; oc < out_c; ++oc) {
    const double* wf = w.data() + std::size_t(oc) * fan_in;
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) {
        double acc = 0.0;
        std::size_t wi = 0;
        for (int ic = 0; ic < in.channels; ++ic)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx)
              acc += wf[wi++] * in.at(ic, y * stride + ky, x * stride + kx);
        out.at(oc, y, x) = acc > 0.0 ? acc : 0.0;
      }
  }
  return out;
}

// unit-normalize the channel vector at every spatial position
inline void normalize_channels(FeatureMap& fm) {
  for (int y = 0; y < fm.height; ++y)
    for (int x = 0; x < fm.width; ++x) {
      double n = 0.0;
      for (int c = 0; c < fm.channels; ++c) n += fm.at(c, y, x) * fm.at(c, y, x);
      n = std::sqrt(n);
      if (n > 0.0)
        for (int c = 0; c < fm.channels; ++c) fm.at(c, y, x) /= n;
    }
}

inline FeatureMap image_as_feature(const PixelImage& img) {
  FeatureMap fm;
  fm.channels = 3;
  fm.width = img.width;
  fm.height = img.height;
  fm.data.resize(3 * img.pixel_count());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      fm.at(0, y, x) = img.r(x, y);
      fm.at(1, y, x) = img.g(x, y);
      fm.at(2, y, x) = img.b(x, y);
    }
  return fm;
}

}  // namespace detail

inline std::vector<FeatureMap> lpips_features(const PixelImage& img, const ConvBank& bank) {
  std::vector<FeatureMap> out;
  FeatureMap cur = detail::image_as_feature(img);
  for (int layer = 0; layer < bank.n_layers; ++layer) {
    cur = detail::conv_relu(cur, bank.weights[layer], bank.n_filters, bank.ksize, bank.stride);
    FeatureMap normed = cur;
    detail::normalize_channels(normed);
    out.push_back(std::move(normed));
  }
  return out;
}

inline double perceptual_distance_from_features(const std::vector<FeatureMap>& fa,
                                                const std::vector<FeatureMap>& fb) {
  if (fa.size() != fb.size()) throw std::invalid_argument("perceptual_distance: feature mismatch");
  double total = 0.0;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    if (fa[l].data.size() != fb[l].data.size())
      throw std::invalid_argument("perceptual_distance: feature mismatch");
    double mse = 0.0;
    for (std::size_t i = 0; i < fa[l].data.size(); ++i) {
      const double d = fa[l].data[i] - fb[l].data[i];
      mse += d * d;
    }
    total += mse / double(fa[l].data.size());
  }
  return total / double(fa.size());
}

// Mean over layers of the mean squared difference between channel-normalized
// feature maps. Unit scale; the evaluation table reports it times 100.
inline double perceptual_distance(const PixelImage& a, const PixelImage& b,
                                  const ConvBank& bank) {
  detail::require_same_dims(a, b, "perceptual_distance");
  return perceptual_distance_from_features(lpips_features(a, bank), lpips_features(b, bank));
}

}  // namespace persogen
