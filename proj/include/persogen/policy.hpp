#pragma once
// Autoregressive categorical policy over visual tokens. Conditioning is a
// recency-weighted pool of history token embeddings plus a hashed tag bag;
// the per-position readout sees the mean embedding of the generated prefix.
// Small enough that every gradient is derived by hand and checked against
// finite differences.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "persogen/dataset.hpp"
#include "persogen/io.hpp"
#include "persogen/rng.hpp"
#include "persogen/text.hpp"
#include "persogen/vecops.hpp"

namespace persogen {

struct PolicyParams {
  int vocab = 0;      // V
  int embed_dim = 0;  // d
  int tag_dim = 0;    // hashed tag feature width
  std::vector<double> token_embed;  // V x d, row-major
  std::vector<double> w_out;        // (2d+tag_dim) x V, row-major by input dim
  std::vector<double> b_out;        // V
  std::int64_t version = 0;

  int input_dim() const { return 2 * embed_dim + tag_dim; }

  std::array<std::vector<double>*, 3> arrays() { return {&token_embed, &w_out, &b_out}; }
  std::array<const std::vector<double>*, 3> arrays() const {
    return {&token_embed, &w_out, &b_out};
  }

  static PolicyParams zeros(int vocab, int embed_dim, int tag_dim) {
    if (vocab < 2 || embed_dim < 1 || tag_dim < 1)
      throw std::invalid_argument("PolicyParams: bad dimensions");
    PolicyParams p;
    p.vocab = vocab;
    p.embed_dim = embed_dim;
    p.tag_dim = tag_dim;
    p.token_embed.assign(std::size_t(vocab) * embed_dim, 0.0);
    p.w_out.assign(std::size_t(p.input_dim()) * vocab, 0.0);
    p.b_out.assign(std::size_t(vocab), 0.0);
    return p;
  }

  // small random embeddings, zero readout: the first logits are exactly zero
  static PolicyParams init(std::uint64_t seed, int vocab, int embed_dim, int tag_dim,
                           double embed_scale = 0.1) {
    PolicyParams p = zeros(vocab, embed_dim, tag_dim);
    SeededRng rng(derive_seed(seed, 0x9017C4));
    for (double& x : p.token_embed) x = rng.normal() * embed_scale;
    return p;
  }

  bool operator==(const PolicyParams&) const = default;
};

struct PolicySnapshot {
  PolicyParams params;
  std::string role;  // "old" or "ref"
};

struct HistoryFeature {
  std::vector<double> img_feat;  // embed_dim
  std::vector<double> tag_feat;  // tag_dim, unit norm or zero; data, not params
  // provenance for gradient flow and for re-encoding under another policy
  std::vector<std::vector<int>> history_tokens;
  std::vector<double> weights;  // recency weight per history item
};

struct Rollout {
  std::vector<int> tokens;
  std::vector<double> per_token_logprob;  // under the temperature-1 policy
  double total_logprob = 0.0;
};

namespace detail {

inline std::vector<double> pooled_embedding(const PolicyParams& p,
                                            std::span<const int> tokens) {
  std::vector<double> out(std::size_t(p.embed_dim), 0.0);
  if (tokens.empty()) return out;
  for (int t : tokens) {
    if (t < 0 || t >= p.vocab) throw std::invalid_argument("policy: token out of range");
    const double* e = p.token_embed.data() + std::size_t(t) * p.embed_dim;
    for (int k = 0; k < p.embed_dim; ++k) out[k] += e[k];
  }
  for (double& x : out) x /= double(tokens.size());
  return out;
}

// recomputes only the parameter-dependent half of a HistoryFeature
inline std::vector<double> img_feat_under(const PolicyParams& p, const HistoryFeature& hf) {
  std::vector<double> img(std::size_t(p.embed_dim), 0.0);
  for (std::size_t i = 0; i < hf.history_tokens.size(); ++i) {
    const std::vector<double> pooled = pooled_embedding(p, hf.history_tokens[i]);
    for (int k = 0; k < p.embed_dim; ++k) img[k] += hf.weights[i] * pooled[k];
  }
  return img;
}

}  // namespace detail

// Recency weights grow linearly with position (oldest = 1), normalized to sum
// one. The tag feature hashes title and tag words of the whole history.
inline HistoryFeature encode_history(const PolicyParams& params, const Sample& sample) {
  if (sample.history.empty()) throw std::invalid_argument("encode_history: empty history");
  HistoryFeature hf;
  const std::size_t h = sample.history.size();
  double wsum = 0.0;
  for (std::size_t i = 0; i < h; ++i) wsum += double(i + 1);
  for (std::size_t i = 0; i < h; ++i) {
    hf.weights.push_back(double(i + 1) / wsum);
    hf.history_tokens.push_back(sample.history[i].image.tokens);
  }
  hf.img_feat = detail::img_feat_under(params, hf);
  hf.tag_feat.assign(std::size_t(params.tag_dim), 0.0);
  for (const Item& it : sample.history) {
    for (const std::string& w : tokenize_words(it.title))
      hf.tag_feat[word_bucket(w, std::size_t(params.tag_dim), kTagFeatSalt)] += 1.0;
    for (const std::string& tag : it.tags)
      for (const std::string& w : tokenize_words(tag))
        hf.tag_feat[word_bucket(w, std::size_t(params.tag_dim), kTagFeatSalt)] += 1.0;
  }
  l2_normalize(hf.tag_feat);
  return hf;
}

// logits = W^T concat(img_feat, mean prefix embedding, tag_feat) + b
inline std::vector<double> logits(const PolicyParams& params, const HistoryFeature& hf,
                                  std::span<const int> prefix) {
  const int V = params.vocab, d = params.embed_dim;
  if (int(hf.img_feat.size()) != d || int(hf.tag_feat.size()) != params.tag_dim)
    throw std::invalid_argument("logits: feature shape mismatch");
  const std::vector<double> prefix_mean = detail::pooled_embedding(params, prefix);
  std::vector<double> z(params.b_out);
  auto add_block = [&](const std::vector<double>& block, int offset) {
    for (std::size_t k = 0; k < block.size(); ++k) {
      const double x = block[k];
      if (x == 0.0) continue;
      const double* wrow = params.w_out.data() + (std::size_t(offset) + k) * V;
      for (int v = 0; v < V; ++v) z[v] += x * wrow[v];
    }
  };
  add_block(hf.img_feat, 0);
  add_block(prefix_mean, d);
  add_block(hf.tag_feat, 2 * d);
  return z;
}

// stable log-softmax via max subtraction
inline std::vector<double> log_softmax(std::span<const double> z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - m);
  const double lse = m + std::log(sum);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
  return out;
}

inline std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> out = log_softmax(z);
  for (double& v : out) v = std::exp(v);
  return out;
}

inline std::pair<double, std::vector<double>> sequence_logprob(const PolicyParams& params,
                                                               const HistoryFeature& hf,
                                                               std::span<const int> tokens) {
  std::vector<double> per_token;
  per_token.reserve(tokens.size());
  double total = 0.0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::vector<double> z = logits(params, hf, tokens.subspan(0, t));
    const std::vector<double> lp = log_softmax(z);
    const int y = tokens[t];
    if (y < 0 || y >= params.vocab) throw std::invalid_argument("sequence_logprob: bad token");
    per_token.push_back(lp[y]);
    total += lp[y];
  }
  return {total, per_token};
}

// Ancestral sampling at the given temperature; below 1e-6 it degenerates to
// argmax (lowest index wins ties). Recorded log-probs are always temperature 1.
inline Rollout sample_image(const PolicyParams& params, const HistoryFeature& hf,
                            std::size_t length, double temperature, SeededRng& rng) {
  if (temperature < 0.0) throw std::invalid_argument("sample_image: negative temperature");
  Rollout out;
  out.tokens.reserve(length);
  out.per_token_logprob.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    const std::vector<double> z = logits(params, hf, out.tokens);
    const std::vector<double> lp = log_softmax(z);
    int chosen = 0;
    if (temperature < 1e-6) {
      for (int v = 1; v < params.vocab; ++v)
        if (z[v] > z[chosen]) chosen = v;
    } else {
      std::vector<double> zt(z);
      for (double& v : zt) v /= temperature;
      const std::vector<double> probs = softmax(zt);
      const double u = rng.uniform01();
      double acc = 0.0;
      chosen = params.vocab - 1;
      for (int v = 0; v < params.vocab; ++v) {
        acc += probs[v];
        if (u < acc) {
          chosen = v;
          break;
        }
      }
    }
    out.tokens.push_back(chosen);
    out.per_token_logprob.push_back(lp[chosen]);
    out.total_logprob += lp[chosen];
  }
  return out;
}

struct PolicyGrad {
  std::vector<double> token_embed, w_out, b_out;

  static PolicyGrad zeros_like(const PolicyParams& p) {
    PolicyGrad g;
    g.token_embed.assign(p.token_embed.size(), 0.0);
    g.w_out.assign(p.w_out.size(), 0.0);
    g.b_out.assign(p.b_out.size(), 0.0);
    return g;
  }

  std::array<std::vector<double>*, 3> arrays() { return {&token_embed, &w_out, &b_out}; }
  std::array<const std::vector<double>*, 3> arrays() const {
    return {&token_embed, &w_out, &b_out};
  }

  void scale(double s) {
    for (auto* a : arrays())
      for (double& x : *a) x *= s;
  }

  double max_abs() const {
    double m = 0.0;
    for (auto* a : arrays())
      for (double x : *a) m = std::max(m, std::abs(x));
    return m;
  }
};

// Backpropagates per-position logit gradients through the readout, the prefix
// pooling and the history pooling into all parameter tensors.
inline void accumulate_sequence_grad(const PolicyParams& params, const HistoryFeature& hf,
                                     std::span<const int> tokens,
                                     const std::vector<std::vector<double>>& dlogits,
                                     PolicyGrad& grad) {
  const int V = params.vocab, d = params.embed_dim, H = params.tag_dim;
  const std::size_t L = tokens.size();
  if (dlogits.size() != L)
    throw std::invalid_argument("accumulate_sequence_grad: gradient row count mismatch");

  // forward prefix means, needed as inputs of the W gradient
  std::vector<double> prefix_means(L * std::size_t(d), 0.0);
  std::vector<double> running(std::size_t(d), 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    if (t > 0) {
      const double* e = params.token_embed.data() + std::size_t(tokens[t - 1]) * d;
      for (int k = 0; k < d; ++k) running[k] += e[k];
      for (int k = 0; k < d; ++k) prefix_means[t * d + k] = running[k] / double(t);
    }
  }

  std::vector<double> dimg(std::size_t(d), 0.0);
  std::vector<double> dprefix(L * std::size_t(d), 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    const std::vector<double>& g = dlogits[t];
    if (int(g.size()) != V)
      throw std::invalid_argument("accumulate_sequence_grad: gradient width mismatch");
    for (int v = 0; v < V; ++v) grad.b_out[v] += g[v];
    // dW[r,v] += x[r] * g[v]; dx[r] = sum_v W[r,v] * g[v]
    auto block = [&](const double* x, int offset, int width, double* dx) {
      for (int k = 0; k < width; ++k) {
        const std::size_t r = std::size_t(offset) + k;
        double* wrow = grad.w_out.data() + r * V;
        const double* prow = params.w_out.data() + r * V;
        const double xv = x[k];
        double acc = 0.0;
        for (int v = 0; v < V; ++v) {
          wrow[v] += xv * g[v];
          acc += prow[v] * g[v];
        }
        if (dx) dx[k] = acc;
      }
    };
    std::vector<double> dx_img(std::size_t(d), 0.0);
    std::vector<double> dx_prefix(std::size_t(d), 0.0);
    block(hf.img_feat.data(), 0, d, dx_img.data());
    block(prefix_means.data() + t * d, d, d, dx_prefix.data());
    block(hf.tag_feat.data(), 2 * d, H, nullptr);  // data feature, no parameter below it
    for (int k = 0; k < d; ++k) {
      dimg[k] += dx_img[k];
      dprefix[t * d + k] = dx_prefix[k];
    }
  }

  // prefix path: dE[tok_s] += sum_{t>s} dprefix_t / t
  std::vector<double> acc(std::size_t(d), 0.0);
  for (std::size_t s = L; s-- > 1;) {
    for (int k = 0; k < d; ++k) acc[k] += dprefix[s * d + k] / double(s);
    double* e = grad.token_embed.data() + std::size_t(tokens[s - 1]) * d;
    for (int k = 0; k < d; ++k) e[k] += acc[k];
  }

  // history pooling path: dE[token] += w_i / L_i * dimg per occurrence
  for (std::size_t i = 0; i < hf.history_tokens.size(); ++i) {
    const auto& toks = hf.history_tokens[i];
    if (toks.empty()) continue;
    const double scale = hf.weights[i] / double(toks.size());
    for (int tok : toks) {
      double* e = grad.token_embed.data() + std::size_t(tok) * d;
      for (int k = 0; k < d; ++k) e[k] += scale * dimg[k];
    }
  }
}

// ---- optimizer -------------------------------------------------------------

struct OptState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::int64_t step = 0;
  std::vector<double> m_embed, v_embed, m_w, v_w, m_b, v_b;

  static OptState for_params(const PolicyParams& p) {
    OptState o;
    o.m_embed.assign(p.token_embed.size(), 0.0);
    o.v_embed.assign(p.token_embed.size(), 0.0);
    o.m_w.assign(p.w_out.size(), 0.0);
    o.v_w.assign(p.w_out.size(), 0.0);
    o.m_b.assign(p.b_out.size(), 0.0);
    o.v_b.assign(p.b_out.size(), 0.0);
    return o;
  }

  bool operator==(const OptState&) const = default;
};

// standard bias-corrected adaptive-moment update
inline void adam_step(PolicyParams& params, const PolicyGrad& grad, OptState& opt, double lr) {
  if (grad.token_embed.size() != params.token_embed.size() ||
      grad.w_out.size() != params.w_out.size() || grad.b_out.size() != params.b_out.size() ||
      opt.m_embed.size() != params.token_embed.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, double(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, double(opt.step));
  auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                    std::vector<double>& v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opt.eps);
    }
  };
  update(params.token_embed, grad.token_embed, opt.m_embed, opt.v_embed);
  update(params.w_out, grad.w_out, opt.m_w, opt.v_w);
  update(params.b_out, grad.b_out, opt.m_b, opt.v_b);
  params.version += 1;
}

// ---- checkpoints -----------------------------------------------------------

struct Checkpoint {
  PolicyParams params;
  OptState opt;
  bool has_opt = false;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::string role;  // "init", "sft", "grpo", ...

  bool operator==(const Checkpoint&) const = default;
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  nlohmann::json j;
  j["format"] = "persogen-checkpoint-v1";
  j["seed"] = ck.seed;
  j["step"] = ck.step;
  j["role"] = ck.role;
  j["params"] = {{"vocab", ck.params.vocab},
                 {"embed_dim", ck.params.embed_dim},
                 {"tag_dim", ck.params.tag_dim},
                 {"version", ck.params.version},
                 {"token_embed", ck.params.token_embed},
                 {"w_out", ck.params.w_out},
                 {"b_out", ck.params.b_out}};
  if (ck.has_opt)
    j["opt"] = {{"step", ck.opt.step},     {"m_embed", ck.opt.m_embed},
                {"v_embed", ck.opt.v_embed}, {"m_w", ck.opt.m_w},
                {"v_w", ck.opt.v_w},         {"m_b", ck.opt.m_b},
                {"v_b", ck.opt.v_b}};
  atomic_write_file(path, j.dump());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto j = nlohmann::json::parse(read_file(path));
  if (j.at("format").get<std::string>() != "persogen-checkpoint-v1")
    throw std::runtime_error("checkpoint: unknown format in " + path.string());
  Checkpoint ck;
  ck.seed = j.at("seed").get<std::uint64_t>();
  ck.step = j.at("step").get<std::int64_t>();
  ck.role = j.at("role").get<std::string>();
  const auto& p = j.at("params");
  ck.params.vocab = p.at("vocab").get<int>();
  ck.params.embed_dim = p.at("embed_dim").get<int>();
  ck.params.tag_dim = p.at("tag_dim").get<int>();
  ck.params.version = p.at("version").get<std::int64_t>();
  ck.params.token_embed = p.at("token_embed").get<std::vector<double>>();
  ck.params.w_out = p.at("w_out").get<std::vector<double>>();
  ck.params.b_out = p.at("b_out").get<std::vector<double>>();
  if (ck.params.token_embed.size() != std::size_t(ck.params.vocab) * ck.params.embed_dim ||
      ck.params.w_out.size() != std::size_t(ck.params.input_dim()) * ck.params.vocab ||
      ck.params.b_out.size() != std::size_t(ck.params.vocab))
    throw std::runtime_error("checkpoint: tensor shapes inconsistent");
  if (j.contains("opt")) {
    const auto& o = j.at("opt");
    ck.opt.step = o.at("step").get<std::int64_t>();
    ck.opt.m_embed = o.at("m_embed").get<std::vector<double>>();
    ck.opt.v_embed = o.at("v_embed").get<std::vector<double>>();
    ck.opt.m_w = o.at("m_w").get<std::vector<double>>();
    ck.opt.v_w = o.at("v_w").get<std::vector<double>>();
    ck.opt.m_b = o.at("m_b").get<std::vector<double>>();
    ck.opt.v_b = o.at("v_b").get<std::vector<double>>();
    ck.has_opt = true;
  } else {
    ck.opt = OptState::for_params(ck.params);
  }
  return ck;
}

}  // namespace persogen
