#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ahand/tape.hpp"
#include "ahand/tensor.hpp"

namespace ahand {

template <typename T>
struct Dense {
  Parameter<T> w;  // [in, out]
  Parameter<T> b;  // [1, out]
};

template <typename T>
Dense<T> dense_init(const std::string& name, int in, int out, Rng& rng, double gain) {
  Dense<T> d;
  d.w = Parameter<T>(name + ".w", init::orthogonal<T>(in, out, rng, gain));
  d.b = Parameter<T>(name + ".b", Tensor<T>::zeros({1, out}));
  return d;
}

// MLP with tanh hidden layers and a linear output layer. The last hidden
// activation is exposed as the intent embedding.
template <typename T>
struct MlpParams {
  std::vector<Dense<T>> layers;
  std::vector<int> dims;  // e.g. {in, 256, 128, 64, out}

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> ps;
    for (auto& l : layers) {
      ps.push_back(&l.w);
      ps.push_back(&l.b);
    }
    return ps;
  }
};

template <typename T>
MlpParams<T> mlp_init(const std::string& name, std::vector<int> dims, Rng& rng,
                      double hidden_gain = 1.4142135623730951, double out_gain = 0.01) {
  if (dims.size() < 2) throw std::invalid_argument("mlp_init: need at least in/out dims");
  MlpParams<T> mlp;
  mlp.dims = dims;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = i + 2 == dims.size();
    mlp.layers.push_back(dense_init<T>(name + ".l" + std::to_string(i), dims[i], dims[i + 1], rng,
                                       last ? out_gain : hidden_gain));
  }
  return mlp;
}

template <typename T>
struct MlpOut {
  typename Tape<T>::Ref out;
  typename Tape<T>::Ref hidden;  // last hidden activation (the 64-d tap)
};

template <typename T>
MlpOut<T> mlp_forward(Tape<T>& t, MlpParams<T>& mlp, typename Tape<T>::Ref x) {
  using Ref = typename Tape<T>::Ref;
  if (t.val(x).cols() != mlp.dims.front())
    throw std::invalid_argument("mlp_forward: input dim mismatch");
  Ref h = x;
  Ref hidden = x;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    Ref lin = t.add_rowvec(t.matmul(h, t.param(mlp.layers[i].w)), t.param(mlp.layers[i].b));
    if (i + 1 < mlp.layers.size()) {
      h = t.tanh_(lin);
      hidden = h;
    } else {
      h = lin;
    }
  }
  return {h, hidden};
}

// Multi-head cross-attention with one query token and two key/value tokens,
// given row-batched inputs: z [N, embed], f1/f2 [N, embed] (the two sensor
// tokens). No projection biases.
template <typename T>
struct AttentionParams {
  int n_heads = 8;
  int embed = 64;
  Parameter<T> wq, wk, wv, wo;  // each [embed, embed]

  std::vector<Parameter<T>*> parameters() { return {&wq, &wk, &wv, &wo}; }
};

template <typename T>
AttentionParams<T> attention_init(const std::string& name, int n_heads, int embed, Rng& rng) {
  if (embed % n_heads != 0) throw std::invalid_argument("attention: embed % n_heads != 0");
  AttentionParams<T> a;
  a.n_heads = n_heads;
  a.embed = embed;
  const double gain = 1.0;
  a.wq = Parameter<T>(name + ".wq", init::orthogonal<T>(embed, embed, rng, gain));
  a.wk = Parameter<T>(name + ".wk", init::orthogonal<T>(embed, embed, rng, gain));
  a.wv = Parameter<T>(name + ".wv", init::orthogonal<T>(embed, embed, rng, gain));
  a.wo = Parameter<T>(name + ".wo", init::orthogonal<T>(embed, embed, rng, gain));
  return a;
}

template <typename T>
typename Tape<T>::Ref cross_attention(Tape<T>& t, AttentionParams<T>& p,
                                      typename Tape<T>::Ref z, typename Tape<T>::Ref f1,
                                      typename Tape<T>::Ref f2) {
  using Ref = typename Tape<T>::Ref;
  const int hd = p.embed / p.n_heads;
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));

  Ref q = t.matmul(z, t.param(p.wq));
  Ref k1 = t.matmul(f1, t.param(p.wk));
  Ref k2 = t.matmul(f2, t.param(p.wk));
  Ref v1 = t.matmul(f1, t.param(p.wv));
  Ref v2 = t.matmul(f2, t.param(p.wv));

  std::vector<Ref> heads;
  for (int h = 0; h < p.n_heads; ++h) {
    const int c0 = h * hd, c1 = (h + 1) * hd;
    Ref qh = t.cols(q, c0, c1);
    Ref l1 = t.scale(t.rowdot(qh, t.cols(k1, c0, c1)), inv_sqrt);
    Ref l2 = t.scale(t.rowdot(qh, t.cols(k2, c0, c1)), inv_sqrt);
    Ref attn = t.softmax_rows(t.concat_cols({l1, l2}));  // [N, 2]
    Ref out_h = t.add(t.mul_colvec(t.cols(v1, c0, c1), t.cols(attn, 0, 1)),
                      t.mul_colvec(t.cols(v2, c0, c1), t.cols(attn, 1, 2)));
    heads.push_back(out_h);
  }
  return t.matmul(t.concat_cols(heads), t.param(p.wo));
}

// Conv encoder for the 36x44 tactile image: 3 stride-2 conv stages
// (1 -> 8 -> 16 -> 32 channels, 3x3 kernels, tanh) then a linear map to 64.
template <typename T>
struct ConvEncoderParams {
  std::vector<Parameter<T>> conv_w;  // [oc, ic, 3, 3]
  std::vector<Parameter<T>> conv_b;  // [1, oc]
  Dense<T> head;
  int in_h = 36, in_w = 44;
  int out_dim = 64;

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> ps;
    for (std::size_t i = 0; i < conv_w.size(); ++i) {
      ps.push_back(&conv_w[i]);
      ps.push_back(&conv_b[i]);
    }
    ps.push_back(&head.w);
    ps.push_back(&head.b);
    return ps;
  }

  int flat_dim() const {
    int h = in_h, w = in_w, c = 1;
    const int channels[3] = {8, 16, 32};
    for (int i = 0; i < 3; ++i) {
      h = (h - 3) / 2 + 1;
      w = (w - 3) / 2 + 1;
      c = channels[i];
    }
    return c * h * w;
  }
};

template <typename T>
ConvEncoderParams<T> conv_encoder_init(const std::string& name, Rng& rng, int in_h = 36,
                                       int in_w = 44, int out_dim = 64) {
  ConvEncoderParams<T> p;
  p.in_h = in_h;
  p.in_w = in_w;
  p.out_dim = out_dim;
  const int ch[4] = {1, 8, 16, 32};
  for (int i = 0; i < 3; ++i) {
    const int fan_in = ch[i] * 9;
    const double sd = std::sqrt(2.0 / fan_in);
    p.conv_w.push_back(Parameter<T>(name + ".c" + std::to_string(i) + ".w",
                                    init::normal<T>({ch[i + 1], ch[i], 3, 3}, rng, sd)));
    p.conv_b.push_back(
        Parameter<T>(name + ".c" + std::to_string(i) + ".b", Tensor<T>::zeros({1, ch[i + 1]})));
  }
  p.head = dense_init<T>(name + ".head", p.flat_dim(), out_dim, rng, 1.0);
  return p;
}

// img [N, 1, in_h, in_w] -> [N, out_dim]
template <typename T>
typename Tape<T>::Ref conv_encode(Tape<T>& t, ConvEncoderParams<T>& p,
                                  typename Tape<T>::Ref img) {
  using Ref = typename Tape<T>::Ref;
  const auto& shape = t.val(img).shape;
  if (shape.size() != 4 || shape[1] != 1 || shape[2] != p.in_h || shape[3] != p.in_w)
    throw std::invalid_argument("conv_encode: expected [N,1," + std::to_string(p.in_h) + "," +
                                std::to_string(p.in_w) + "]");
  Ref h = img;
  for (int i = 0; i < 3; ++i)
    h = t.tanh_(t.conv2d(h, t.param(p.conv_w[i]), t.param(p.conv_b[i]), 2));
  const int n = t.val(h).shape[0];
  Ref flat = t.reshape(h, {n, p.flat_dim()});
  return t.add_rowvec(t.matmul(flat, t.param(p.head.w)), t.param(p.head.b));
}

// ---- diagonal Gaussian policy head (plain math; the tape-side log-prob for
// PPO is assembled from tape ops in the trainer) ----

struct GaussSample {
  std::vector<double> action;
  double log_prob = 0.0;
};

inline GaussSample gaussian_policy_sample(const std::vector<double>& mean,
                                          const std::vector<double>& log_std, Rng& rng,
                                          bool deterministic = false) {
  const std::size_t d = mean.size();
  if (log_std.size() != d) throw std::invalid_argument("gaussian_policy_sample: dim mismatch");
  GaussSample s;
  s.action.resize(d);
  const double log2pi = 1.8378770664093454835606594728112;
  double lp = -0.5 * static_cast<double>(d) * log2pi;
  for (std::size_t i = 0; i < d; ++i) {
    const double sd = std::exp(log_std[i]);
    s.action[i] = deterministic ? mean[i] : mean[i] + sd * rng.normal();
    const double z = (s.action[i] - mean[i]) / sd;
    lp -= 0.5 * z * z + log_std[i];
  }
  s.log_prob = lp;
  return s;
}

inline double gaussian_log_prob(const std::vector<double>& action, const std::vector<double>& mean,
                                const std::vector<double>& log_std) {
  const double log2pi = 1.8378770664093454835606594728112;
  double lp = -0.5 * static_cast<double>(mean.size()) * log2pi;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double sd = std::exp(log_std[i]);
    const double z = (action[i] - mean[i]) / sd;
    lp -= 0.5 * z * z + log_std[i];
  }
  return lp;
}

// ---- Adam with bias correction ----

class optimizer_error : public std::runtime_error {
 public:
  explicit optimizer_error(const std::string& what) : std::runtime_error(what) {}
};

template <typename T>
struct Adam {
  double lr = 3e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long t = 0;

  // Rejects the step (throws, leaving params untouched) on non-finite grads.
  void step(const std::vector<Parameter<T>*>& params) {
    for (auto* p : params)
      if (!p->grad.all_finite()) throw optimizer_error("non-finite gradient in " + p->name);
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (auto* p : params) {
      for (int i = 0; i < p->value.numel(); ++i) {
        const double g = static_cast<double>(p->grad[i]);
        const double m = beta1 * static_cast<double>(p->m[i]) + (1.0 - beta1) * g;
        const double v = beta2 * static_cast<double>(p->v[i]) + (1.0 - beta2) * g * g;
        p->m[i] = static_cast<T>(m);
        p->v[i] = static_cast<T>(v);
        const double mhat = m / bc1, vhat = v / bc2;
        p->value[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }

  static void zero_grad(const std::vector<Parameter<T>*>& params) {
    for (auto* p : params) p->zero_grad();
  }
};

}  // namespace ahand
