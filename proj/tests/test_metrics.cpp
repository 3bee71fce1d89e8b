#include "doctest.h"

#include <cmath>
#include <vector>

#include "persogen/metrics.hpp"

using namespace persogen;

namespace {

PixelImage constant_image(int w, int h, double r, double g, double b) {
  PixelImage px;
  px.width = w;
  px.height = h;
  px.rgb.reserve(std::size_t(w) * h * 3);
  for (int i = 0; i < w * h; ++i) {
    px.rgb.push_back(r);
    px.rgb.push_back(g);
    px.rgb.push_back(b);
  }
  return px;
}

PixelImage random_image(int w, int h, std::uint64_t seed) {
  PixelImage px;
  px.width = w;
  px.height = h;
  px.rgb.resize(std::size_t(w) * h * 3);
  SeededRng rng(seed);
  for (double& v : px.rgb) v = rng.uniform01();
  return px;
}

PixelImage invert(const PixelImage& a) {
  PixelImage out = a;
  for (double& v : out.rgb) v = 1.0 - v;
  return out;
}

// ---- straight-line MS-SSIM oracle (independent of metrics.hpp internals) ----

std::vector<double> oracle_luma(const PixelImage& img) {
  std::vector<double> out(img.pixel_count());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const std::size_t i = 3 * (std::size_t(y) * img.width + x);
      out[std::size_t(y) * img.width + x] =
          0.299 * img.rgb[i] + 0.587 * img.rgb[i + 1] + 0.114 * img.rgb[i + 2];
    }
  return out;
}

void oracle_window_means(const std::vector<double>& a, const std::vector<double>& b, int w,
                         int h, double* mean_l, double* mean_cs) {
  const double C1 = 1e-4, C2 = 9e-4;
  double suml = 0, sumcs = 0;
  int count = 0;
  for (int y = 0; y + 7 <= h; ++y)
    for (int x = 0; x + 7 <= w; ++x) {
      double s1 = 0, s2 = 0, s11 = 0, s22 = 0, s12 = 0;
      for (int wy = 0; wy < 7; ++wy)
        for (int wx = 0; wx < 7; ++wx) {
          const double pa = a[std::size_t(y + wy) * w + (x + wx)];
          const double pb = b[std::size_t(y + wy) * w + (x + wx)];
          s1 += pa;
          s2 += pb;
          s11 += pa * pa;
          s22 += pb * pb;
          s12 += pa * pb;
        }
      const double m1 = s1 / 49.0, m2 = s2 / 49.0;
      const double v1 = s11 / 49.0 - m1 * m1;
      const double v2 = s22 / 49.0 - m2 * m2;
      const double v12 = s12 / 49.0 - m1 * m2;
      suml += (2 * m1 * m2 + C1) / (m1 * m1 + m2 * m2 + C1);
      sumcs += (2 * v12 + C2) / (v1 + v2 + C2);
      ++count;
    }
  *mean_l = suml / count;
  *mean_cs = sumcs / count;
}

std::vector<double> oracle_pool2(const std::vector<double>& p, int w, int h) {
  std::vector<double> out(std::size_t(w / 2) * (h / 2));
  for (int y = 0; y < h / 2; ++y)
    for (int x = 0; x < w / 2; ++x)
      out[std::size_t(y) * (w / 2) + x] =
          (p[std::size_t(2 * y) * w + 2 * x] + p[std::size_t(2 * y) * w + 2 * x + 1] +
           p[std::size_t(2 * y + 1) * w + 2 * x] + p[std::size_t(2 * y + 1) * w + 2 * x + 1]) /
          4.0;
  return out;
}

double oracle_msssim(const PixelImage& ia, const PixelImage& ib) {
  std::vector<double> a = oracle_luma(ia), b = oracle_luma(ib);
  int w = ia.width, h = ia.height;
  const double raw[3] = {0.0448, 0.2856, 0.3001};
  const double wsum = raw[0] + raw[1] + raw[2];
  double value = 1.0;
  for (int s = 0; s < 3; ++s) {
    if (s > 0) {
      a = oracle_pool2(a, w, h);
      b = oracle_pool2(b, w, h);
      w /= 2;
      h /= 2;
    }
    double ml = 0, mcs = 0;
    oracle_window_means(a, b, w, h, &ml, &mcs);
    value *= std::pow(std::max(mcs, 0.0), raw[s] / wsum);
    if (s == 2) value *= std::pow(std::max(ml, 0.0), raw[s] / wsum);
  }
  return value;
}

// ---- straight-line LPIPS-style oracle ----

double oracle_perceptual(const PixelImage& ia, const PixelImage& ib, const ConvBank& bank) {
  auto forward = [&](const PixelImage& img) {
    // channels-first planes
    int w = img.width, h = img.height, c = 3;
    std::vector<double> cur(std::size_t(c) * w * h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < 3; ++ch)
          cur[(std::size_t(ch) * h + y) * w + x] = img.rgb[3 * (std::size_t(y) * w + x) + ch];
    std::vector<std::vector<double>> levels;
    std::vector<int> widths, heights;
    for (int layer = 0; layer < 3; ++layer) {
      const int ow = (w - 3) / 2 + 1, oh = (h - 3) / 2 + 1;
      std::vector<double> nxt(std::size_t(8) * ow * oh, 0.0);
      for (int oc = 0; oc < 8; ++oc)
        for (int y = 0; y < oh; ++y)
          for (int x = 0; x < ow; ++x) {
            double acc = 0;
            std::size_t wi = std::size_t(oc) * (std::size_t(9) * c);
            for (int ic = 0; ic < c; ++ic)
              for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx)
                  acc += bank.weights[layer][wi++] *
                         cur[(std::size_t(ic) * h + (2 * y + ky)) * w + (2 * x + kx)];
            nxt[(std::size_t(oc) * oh + y) * ow + x] = std::max(acc, 0.0);
          }
      cur = nxt;
      c = 8;
      w = ow;
      h = oh;
      // channel-unit normalization per position
      std::vector<double> normed = cur;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double n = 0;
          for (int ch = 0; ch < 8; ++ch) {
            const double v = cur[(std::size_t(ch) * h + y) * w + x];
            n += v * v;
          }
          n = std::sqrt(n);
          if (n > 0)
            for (int ch = 0; ch < 8; ++ch) normed[(std::size_t(ch) * h + y) * w + x] /= n;
        }
      levels.push_back(normed);
      widths.push_back(w);
      heights.push_back(h);
    }
    return levels;
  };
  const auto fa = forward(ia), fb = forward(ib);
  double total = 0;
  for (int l = 0; l < 3; ++l) {
    double mse = 0;
    for (std::size_t i = 0; i < fa[l].size(); ++i) {
      const double d = fa[l][i] - fb[l][i];
      mse += d * d;
    }
    total += mse / double(fa[l].size());
  }
  return total / 3.0;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("clip_score endpoints") {
  std::vector<double> e{0.6, 0.8};
  CHECK(clip_score(e, e) == doctest::Approx(100.0).epsilon(1e-9));
  std::vector<double> x{1.0, 0.0}, y{0.0, 1.0};
  CHECK(clip_score(x, y) == 0.0);
  std::vector<double> v{0.6, 0.8};
  CHECK(clip_score(x, v) == doctest::Approx(60.0).epsilon(1e-12));
  std::vector<double> neg{-1.0, 0.0};
  CHECK(clip_score(x, neg) == 0.0);  // negative cosine clamps to zero
  std::vector<double> zero{0.0, 0.0};
  CHECK(clip_score(x, zero) == 0.0);
  std::vector<double> wrong{1.0, 0.0, 0.0};
  CHECK_THROWS_AS(clip_score(x, wrong), std::invalid_argument);
}

TEST_CASE("ssim of an image with itself is exactly one") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const PixelImage a = random_image(32, 32, seed);
    CHECK(ssim(a, a) == 1.0);
  }
}

TEST_CASE("ssim of constant images matches the closed form") {
  const PixelImage a = constant_image(16, 16, 0.2, 0.2, 0.2);
  const PixelImage b = constant_image(16, 16, 0.8, 0.8, 0.8);
  // luma of a constant gray image equals the gray level; variances vanish
  const double la = 0.299 * 0.2 + 0.587 * 0.2 + 0.114 * 0.2;
  const double lb = 0.299 * 0.8 + 0.587 * 0.8 + 0.114 * 0.8;
  const double expected = (2 * la * lb + 1e-4) / (la * la + lb * lb + 1e-4);
  CHECK(ssim(a, b) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ssim of a high-contrast image against its negative is low") {
  PixelImage a = random_image(32, 32, 11);
  // push toward a binary image for contrast
  for (double& v : a.rgb) v = v < 0.5 ? 0.02 : 0.98;
  CHECK(ssim(a, invert(a)) < 0.5);
}

TEST_CASE("ssim validates dimensions") {
  const PixelImage a = random_image(32, 32, 1);
  const PixelImage b = random_image(16, 32, 1);
  CHECK_THROWS_AS(ssim(a, b), std::invalid_argument);
  const PixelImage tiny = random_image(6, 6, 1);
  CHECK_THROWS_AS(ssim(tiny, tiny), std::invalid_argument);
}

TEST_CASE("ssim and msssim are bitwise symmetric") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const PixelImage a = random_image(32, 32, 2 * seed);
    const PixelImage b = random_image(32, 32, 2 * seed + 1);
    CHECK(ssim(a, b) == ssim(b, a));
    CHECK(msssim(a, b) == msssim(b, a));
  }
}

TEST_CASE("msssim of an image with itself is exactly one") {
  const PixelImage a = random_image(32, 32, 77);
  CHECK(msssim(a, a) == 1.0);
}

TEST_CASE("msssim rejects images too small for three scales") {
  const PixelImage a = random_image(24, 24, 1);
  CHECK_THROWS_AS(msssim(a, a), std::invalid_argument);
  const PixelImage ok = random_image(28, 28, 1);
  CHECK_NOTHROW(msssim(ok, ok));
}

TEST_CASE("msssim matches an independent straight-line implementation") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const PixelImage a = random_image(32, 32, 100 + seed);
    const PixelImage b = random_image(32, 32, 200 + seed);
    CHECK(msssim(a, b) == doctest::Approx(oracle_msssim(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("perceptual distance identity and symmetry") {
  const ConvBank bank = make_conv_bank(3);
  const PixelImage a = random_image(32, 32, 5);
  const PixelImage b = random_image(32, 32, 6);
  CHECK(perceptual_distance(a, a, bank) == 0.0);
  CHECK(perceptual_distance(a, b, bank) == perceptual_distance(b, a, bank));
  CHECK(perceptual_distance(a, b, bank) >= 0.0);
  const PixelImage c = random_image(16, 32, 7);
  CHECK_THROWS_AS(perceptual_distance(a, c, bank), std::invalid_argument);
}

TEST_CASE("perceptual distance under the seed-3 bank matches brute-force recomputation") {
  const ConvBank bank = make_conv_bank(3);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const PixelImage a = random_image(32, 32, 300 + seed);
    const PixelImage b = random_image(32, 32, 400 + seed);
    CHECK(perceptual_distance(a, b, bank) ==
          doctest::Approx(oracle_perceptual(a, b, bank)).epsilon(1e-12));
  }
}

TEST_CASE("bank construction is deterministic per seed") {
  const ConvBank a = make_conv_bank(9), b = make_conv_bank(9), c = make_conv_bank(10);
  CHECK(a.weights == b.weights);
  CHECK(a.weights != c.weights);
}

}  // TEST_SUITE
