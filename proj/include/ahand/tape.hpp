#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ahand/tensor.hpp"

namespace ahand {

// Reverse-mode autodiff over a flat tape of tensor nodes. Graphs here are
// small (tens of nodes); the heavy lifting is inside Eigen matmuls. A tape
// built with grad_enabled = false records no closures and works as a plain
// forward evaluator.
template <typename T>
class Tape {
 public:
  using Ref = int;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Ref constant(Tensor<T> v) { return push(std::move(v), false, nullptr, {}); }

  Ref param(Parameter<T>& p) {
    Ref r = push(p.value, true, &p, {});
    return r;
  }

  const Tensor<T>& val(Ref r) const { return nodes_[r].value; }
  const Tensor<T>& grad_of(Ref r) const { return nodes_[r].grad; }

  // ---- elementwise / broadcast ----

  Ref add(Ref a, Ref b) {
    check_same(a, b, "add");
    Tensor<T> out = nodes_[a].value;
    const auto& bv = nodes_[b].value;
    for (int i = 0; i < out.numel(); ++i) out[i] += bv[i];
    return unary_or_binary(std::move(out), {a, b}, [a, b](Tape& t, const Node& n) {
      t.accumulate(a, n.grad);
      t.accumulate(b, n.grad);
    });
  }

  Ref sub(Ref a, Ref b) {
    check_same(a, b, "sub");
    Tensor<T> out = nodes_[a].value;
    const auto& bv = nodes_[b].value;
    for (int i = 0; i < out.numel(); ++i) out[i] -= bv[i];
    return unary_or_binary(std::move(out), {a, b}, [a, b](Tape& t, const Node& n) {
      t.accumulate(a, n.grad);
      t.accumulate_scaled(b, n.grad, T(-1));
    });
  }

  Ref mul(Ref a, Ref b) {
    check_same(a, b, "mul");
    Tensor<T> out = nodes_[a].value;
    const auto& bv = nodes_[b].value;
    for (int i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    return unary_or_binary(std::move(out), {a, b}, [a, b](Tape& t, const Node& n) {
      const auto& av = t.nodes_[a].value;
      const auto& bv2 = t.nodes_[b].value;
      if (t.nodes_[a].needs_grad) {
        Tensor<T> g = n.grad;
        for (int i = 0; i < g.numel(); ++i) g[i] *= bv2[i];
        t.accumulate(a, g);
      }
      if (t.nodes_[b].needs_grad) {
        Tensor<T> g = n.grad;
        for (int i = 0; i < g.numel(); ++i) g[i] *= av[i];
        t.accumulate(b, g);
      }
    });
  }

  Ref scale(Ref a, T s) {
    Tensor<T> out = nodes_[a].value;
    for (auto& v : out.data) v *= s;
    return unary_or_binary(std::move(out), {a}, [a, s](Tape& t, const Node& n) {
      t.accumulate_scaled(a, n.grad, s);
    });
  }

  Ref add_scalar(Ref a, T s) {
    Tensor<T> out = nodes_[a].value;
    for (auto& v : out.data) v += s;
    return unary_or_binary(std::move(out), {a},
                           [a](Tape& t, const Node& n) { t.accumulate(a, n.grad); });
  }

  // x [m,n] + b [1,n]
  Ref add_rowvec(Ref x, Ref b) {
    const auto& xv = nodes_[x].value;
    const auto& bv = nodes_[b].value;
    if (bv.rows() != 1 || bv.cols() != xv.cols())
      throw std::invalid_argument("add_rowvec: shape mismatch");
    Tensor<T> out = xv;
    for (int r = 0; r < out.rows(); ++r)
      for (int c = 0; c < out.cols(); ++c) out(r, c) += bv(0, c);
    return unary_or_binary(std::move(out), {x, b}, [x, b](Tape& t, const Node& n) {
      t.accumulate(x, n.grad);
      if (t.nodes_[b].needs_grad) {
        Tensor<T> g({1, n.grad.cols()});
        for (int r = 0; r < n.grad.rows(); ++r)
          for (int c = 0; c < n.grad.cols(); ++c) g(0, c) += n.grad(r, c);
        t.accumulate(b, g);
      }
    });
  }

  // x [m,n] * r [1,n]
  Ref mul_rowvec(Ref x, Ref r) {
    const auto& xv = nodes_[x].value;
    const auto& rv = nodes_[r].value;
    if (rv.rows() != 1 || rv.cols() != xv.cols())
      throw std::invalid_argument("mul_rowvec: shape mismatch");
    Tensor<T> out = xv;
    for (int i = 0; i < out.rows(); ++i)
      for (int c = 0; c < out.cols(); ++c) out(i, c) *= rv(0, c);
    return unary_or_binary(std::move(out), {x, r}, [x, r](Tape& t, const Node& n) {
      const auto& xv2 = t.nodes_[x].value;
      const auto& rv2 = t.nodes_[r].value;
      if (t.nodes_[x].needs_grad) {
        Tensor<T> g = n.grad;
        for (int i = 0; i < g.rows(); ++i)
          for (int c = 0; c < g.cols(); ++c) g(i, c) *= rv2(0, c);
        t.accumulate(x, g);
      }
      if (t.nodes_[r].needs_grad) {
        Tensor<T> g({1, n.grad.cols()});
        for (int i = 0; i < n.grad.rows(); ++i)
          for (int c = 0; c < n.grad.cols(); ++c) g(0, c) += n.grad(i, c) * xv2(i, c);
        t.accumulate(r, g);
      }
    });
  }

  // x [m,n] * c [m,1]
  Ref mul_colvec(Ref x, Ref c) {
    const auto& xv = nodes_[x].value;
    const auto& cv = nodes_[c].value;
    if (cv.rows() != xv.rows() || cv.cols() != 1)
      throw std::invalid_argument("mul_colvec: shape mismatch");
    Tensor<T> out = xv;
    for (int r = 0; r < out.rows(); ++r)
      for (int j = 0; j < out.cols(); ++j) out(r, j) *= cv(r, 0);
    return unary_or_binary(std::move(out), {x, c}, [x, c](Tape& t, const Node& n) {
      const auto& xv2 = t.nodes_[x].value;
      const auto& cv2 = t.nodes_[c].value;
      if (t.nodes_[x].needs_grad) {
        Tensor<T> g = n.grad;
        for (int r = 0; r < g.rows(); ++r)
          for (int j = 0; j < g.cols(); ++j) g(r, j) *= cv2(r, 0);
        t.accumulate(x, g);
      }
      if (t.nodes_[c].needs_grad) {
        Tensor<T> g({n.grad.rows(), 1});
        for (int r = 0; r < n.grad.rows(); ++r)
          for (int j = 0; j < n.grad.cols(); ++j) g(r, 0) += n.grad(r, j) * xv2(r, j);
        t.accumulate(c, g);
      }
    });
  }

  // x + s where s is a [1,1] graph scalar
  Ref add_bcast(Ref x, Ref s) {
    if (nodes_[s].value.numel() != 1) throw std::invalid_argument("add_bcast: s must be scalar");
    Tensor<T> out = nodes_[x].value;
    const T sv = nodes_[s].value[0];
    for (auto& v : out.data) v += sv;
    return unary_or_binary(std::move(out), {x, s}, [x, s](Tape& t, const Node& n) {
      t.accumulate(x, n.grad);
      if (t.nodes_[s].needs_grad) {
        T g = 0;
        for (int i = 0; i < n.grad.numel(); ++i) g += n.grad[i];
        Tensor<T> gs = Tensor<T>::full({1, 1}, g);
        gs.shape = t.nodes_[s].value.shape;
        t.accumulate(s, gs);
      }
    });
  }

  Ref tanh_(Ref a) {
    Tensor<T> out = nodes_[a].value;
    for (auto& v : out.data) v = std::tanh(v);
    Ref r = unary_or_binary(std::move(out), {a}, {});
    set_back(r, [a, r](Tape& t, const Node& n) {
      Tensor<T> g = n.grad;
      const auto& y = t.nodes_[r].value;
      for (int i = 0; i < g.numel(); ++i) g[i] *= T(1) - y[i] * y[i];
      t.accumulate(a, g);
    });
    return r;
  }

  Ref sigmoid_(Ref a) {
    Tensor<T> out = nodes_[a].value;
    for (auto& v : out.data) v = T(1) / (T(1) + std::exp(-v));
    Ref r = unary_or_binary(std::move(out), {a}, {});
    set_back(r, [a, r](Tape& t, const Node& n) {
      Tensor<T> g = n.grad;
      const auto& y = t.nodes_[r].value;
      for (int i = 0; i < g.numel(); ++i) g[i] *= y[i] * (T(1) - y[i]);
      t.accumulate(a, g);
    });
    return r;
  }

  Ref exp_(Ref a) {
    Tensor<T> out = nodes_[a].value;
    for (auto& v : out.data) v = std::exp(v);
    Ref r = unary_or_binary(std::move(out), {a}, {});
    set_back(r, [a, r](Tape& t, const Node& n) {
      Tensor<T> g = n.grad;
      const auto& y = t.nodes_[r].value;
      for (int i = 0; i < g.numel(); ++i) g[i] *= y[i];
      t.accumulate(a, g);
    });
    return r;
  }

  Ref square(Ref a) {
    Tensor<T> out = nodes_[a].value;
    for (auto& v : out.data) v *= v;
    return unary_or_binary(std::move(out), {a}, [a](Tape& t, const Node& n) {
      Tensor<T> g = n.grad;
      const auto& x = t.nodes_[a].value;
      for (int i = 0; i < g.numel(); ++i) g[i] *= T(2) * x[i];
      t.accumulate(a, g);
    });
  }

  Ref clamp_(Ref a, T lo, T hi) {
    Tensor<T> out = nodes_[a].value;
    for (auto& v : out.data) v = std::min(hi, std::max(lo, v));
    return unary_or_binary(std::move(out), {a}, [a, lo, hi](Tape& t, const Node& n) {
      Tensor<T> g = n.grad;
      const auto& x = t.nodes_[a].value;
      for (int i = 0; i < g.numel(); ++i)
        if (x[i] <= lo || x[i] >= hi) g[i] = T(0);
      t.accumulate(a, g);
    });
  }

  Ref minimum(Ref a, Ref b) {
    check_same(a, b, "minimum");
    Tensor<T> out = nodes_[a].value;
    const auto& bv = nodes_[b].value;
    for (int i = 0; i < out.numel(); ++i) out[i] = std::min(out[i], bv[i]);
    return unary_or_binary(std::move(out), {a, b}, [a, b](Tape& t, const Node& n) {
      const auto& av = t.nodes_[a].value;
      const auto& bv2 = t.nodes_[b].value;
      Tensor<T> ga = n.grad, gb = n.grad;
      for (int i = 0; i < n.grad.numel(); ++i) {
        if (av[i] <= bv2[i])
          gb[i] = T(0);
        else
          ga[i] = T(0);
      }
      if (t.nodes_[a].needs_grad) t.accumulate(a, ga);
      if (t.nodes_[b].needs_grad) t.accumulate(b, gb);
    });
  }

  // ---- reductions / shape ----

  Ref sum_all(Ref a) {
    T s = 0;
    for (T v : nodes_[a].value.data) s += v;
    return unary_or_binary(Tensor<T>::full({1, 1}, s), {a}, [a](Tape& t, const Node& n) {
      t.accumulate_broadcast(a, n.grad[0]);
    });
  }

  Ref mean_all(Ref a) {
    const T inv = T(1) / T(nodes_[a].value.numel());
    T s = 0;
    for (T v : nodes_[a].value.data) s += v;
    return unary_or_binary(Tensor<T>::full({1, 1}, s * inv), {a},
                           [a, inv](Tape& t, const Node& n) {
                             t.accumulate_broadcast(a, n.grad[0] * inv);
                           });
  }

  // [m,n] -> [m,1]
  Ref rowsum(Ref a) {
    const auto& x = nodes_[a].value;
    Tensor<T> out({x.rows(), 1});
    for (int r = 0; r < x.rows(); ++r)
      for (int c = 0; c < x.cols(); ++c) out(r, 0) += x(r, c);
    return unary_or_binary(std::move(out), {a}, [a](Tape& t, const Node& n) {
      const auto& xv = t.nodes_[a].value;
      Tensor<T> g(xv.shape);
      for (int r = 0; r < xv.rows(); ++r)
        for (int c = 0; c < xv.cols(); ++c) g(r, c) = n.grad(r, 0);
      t.accumulate(a, g);
    });
  }

  // rowwise dot product: [m,n] x [m,n] -> [m,1]
  Ref rowdot(Ref a, Ref b) {
    check_same(a, b, "rowdot");
    const auto& av = nodes_[a].value;
    const auto& bv = nodes_[b].value;
    Tensor<T> out({av.rows(), 1});
    for (int r = 0; r < av.rows(); ++r)
      for (int c = 0; c < av.cols(); ++c) out(r, 0) += av(r, c) * bv(r, c);
    return unary_or_binary(std::move(out), {a, b}, [a, b](Tape& t, const Node& n) {
      const auto& av2 = t.nodes_[a].value;
      const auto& bv2 = t.nodes_[b].value;
      if (t.nodes_[a].needs_grad) {
        Tensor<T> g(av2.shape);
        for (int r = 0; r < av2.rows(); ++r)
          for (int c = 0; c < av2.cols(); ++c) g(r, c) = n.grad(r, 0) * bv2(r, c);
        t.accumulate(a, g);
      }
      if (t.nodes_[b].needs_grad) {
        Tensor<T> g(bv2.shape);
        for (int r = 0; r < bv2.rows(); ++r)
          for (int c = 0; c < bv2.cols(); ++c) g(r, c) = n.grad(r, 0) * av2(r, c);
        t.accumulate(b, g);
      }
    });
  }

  Ref cols(Ref a, int c0, int c1) {
    const auto& x = nodes_[a].value;
    if (c0 < 0 || c1 > x.cols() || c0 >= c1) throw std::invalid_argument("cols: bad range");
    Tensor<T> out({x.rows(), c1 - c0});
    for (int r = 0; r < x.rows(); ++r)
      for (int c = c0; c < c1; ++c) out(r, c - c0) = x(r, c);
    return unary_or_binary(std::move(out), {a}, [a, c0, c1](Tape& t, const Node& n) {
      const auto& xv = t.nodes_[a].value;
      Tensor<T> g(xv.shape);
      for (int r = 0; r < xv.rows(); ++r)
        for (int c = c0; c < c1; ++c) g(r, c) = n.grad(r, c - c0);
      t.accumulate(a, g);
    });
  }

  Ref concat_cols(const std::vector<Ref>& parts) {
    int rows = nodes_[parts.at(0)].value.rows();
    int total = 0;
    for (Ref p : parts) {
      if (nodes_[p].value.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
      total += nodes_[p].value.cols();
    }
    Tensor<T> out({rows, total});
    int off = 0;
    for (Ref p : parts) {
      const auto& x = nodes_[p].value;
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < x.cols(); ++c) out(r, off + c) = x(r, c);
      off += x.cols();
    }
    std::vector<Ref> parents = parts;
    return unary_or_binary(std::move(out), parents, [parents](Tape& t, const Node& n) {
      int off2 = 0;
      for (Ref p : parents) {
        const auto& x = t.nodes_[p].value;
        if (t.nodes_[p].needs_grad) {
          Tensor<T> g(x.shape);
          for (int r = 0; r < x.rows(); ++r)
            for (int c = 0; c < x.cols(); ++c) g(r, c) = n.grad(r, off2 + c);
          t.accumulate(p, g);
        }
        off2 += x.cols();
      }
    });
  }

  Ref reshape(Ref a, std::vector<int> shape) {
    if (Tensor<T>::numel_of(shape) != nodes_[a].value.numel())
      throw std::invalid_argument("reshape: numel mismatch");
    Tensor<T> out = nodes_[a].value;
    out.shape = std::move(shape);
    return unary_or_binary(std::move(out), {a}, [a](Tape& t, const Node& n) {
      Tensor<T> g = n.grad;
      g.shape = t.nodes_[a].value.shape;
      t.accumulate(a, g);
    });
  }

  // row-wise softmax on [m,n]
  Ref softmax_rows(Ref a) {
    const auto& x = nodes_[a].value;
    Tensor<T> out(x.shape);
    for (int r = 0; r < x.rows(); ++r) {
      T mx = x(r, 0);
      for (int c = 1; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
      T sum = 0;
      for (int c = 0; c < x.cols(); ++c) {
        out(r, c) = std::exp(x(r, c) - mx);
        sum += out(r, c);
      }
      for (int c = 0; c < x.cols(); ++c) out(r, c) /= sum;
    }
    Ref r = unary_or_binary(std::move(out), {a}, {});
    set_back(r, [a, r](Tape& t, const Node& n) {
      const auto& y = t.nodes_[r].value;
      Tensor<T> g(y.shape);
      for (int i = 0; i < y.rows(); ++i) {
        T dot = 0;
        for (int c = 0; c < y.cols(); ++c) dot += n.grad(i, c) * y(i, c);
        for (int c = 0; c < y.cols(); ++c) g(i, c) = y(i, c) * (n.grad(i, c) - dot);
      }
      t.accumulate(a, g);
    });
    return r;
  }

  // ---- linear algebra ----

  Ref matmul(Ref a, Ref b) {
    const auto& av = nodes_[a].value;
    const auto& bv = nodes_[b].value;
    if (av.cols() != bv.rows()) throw std::invalid_argument("matmul: inner dim mismatch");
    Tensor<T> out({av.rows(), bv.cols()});
    out.mat().noalias() = av.mat() * bv.mat();
    return unary_or_binary(std::move(out), {a, b}, [a, b](Tape& t, const Node& n) {
      const auto& av2 = t.nodes_[a].value;
      const auto& bv2 = t.nodes_[b].value;
      if (t.nodes_[a].needs_grad) {
        Tensor<T> g(av2.shape);
        g.mat().noalias() = n.grad.mat() * bv2.mat().transpose();
        t.accumulate(a, g);
      }
      if (t.nodes_[b].needs_grad) {
        Tensor<T> g(bv2.shape);
        g.mat().noalias() = av2.mat().transpose() * n.grad.mat();
        t.accumulate(b, g);
      }
    });
  }

  // ---- convolution (stride-s, valid padding) ----
  // x [N,C,H,W], w [OC,IC,KH,KW], b [1,OC] -> [N,OC,OH,OW]
  Ref conv2d(Ref x, Ref w, Ref b, int stride) {
    const auto& xv = nodes_[x].value;
    const auto& wv = nodes_[w].value;
    const auto& bv = nodes_[b].value;
    if (xv.rank() != 4 || wv.rank() != 4) throw std::invalid_argument("conv2d: rank");
    const int N = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
    const int OC = wv.shape[0], KH = wv.shape[2], KW = wv.shape[3];
    if (wv.shape[1] != C || bv.numel() != OC) throw std::invalid_argument("conv2d: shape");
    if (H < KH || W < KW) throw std::invalid_argument("conv2d: input smaller than kernel");
    const int OH = (H - KH) / stride + 1, OW = (W - KW) / stride + 1;

    const int K = C * KH * KW;
    Tensor<T> col({N * OH * OW, K});
    for (int n = 0; n < N; ++n)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          T* row = &col.data[(static_cast<std::size_t>(n) * OH * OW + oy * OW + ox) * K];
          for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < KH; ++ky) {
              const T* src = &xv.data[((static_cast<std::size_t>(n) * C + c) * H +
                                       (oy * stride + ky)) * W + ox * stride];
              for (int kx = 0; kx < KW; ++kx) row[(c * KH + ky) * KW + kx] = src[kx];
            }
        }

    Tensor<T> wmat({K, OC});
    for (int oc = 0; oc < OC; ++oc)
      for (int k = 0; k < K; ++k) wmat(k, oc) = wv.data[static_cast<std::size_t>(oc) * K + k];

    Tensor<T> out_mat({N * OH * OW, OC});
    out_mat.mat().noalias() = col.mat() * wmat.mat();

    Tensor<T> out({N, OC, OH, OW});
    for (int n = 0; n < N; ++n)
      for (int oc = 0; oc < OC; ++oc)
        for (int oy = 0; oy < OH; ++oy)
          for (int ox = 0; ox < OW; ++ox)
            out.data[((static_cast<std::size_t>(n) * OC + oc) * OH + oy) * OW + ox] =
                out_mat(n * OH * OW + oy * OW + ox, oc) + bv[oc];

    auto col_cache = std::make_shared<Tensor<T>>(std::move(col));
    return unary_or_binary(
        std::move(out), {x, w, b},
        [x, w, b, stride, col_cache, N, C, H, W, OC, KH, KW, OH, OW, K](Tape& t, const Node& n) {
          // regroup dout as [N*OH*OW, OC]
          Tensor<T> dmat({N * OH * OW, OC});
          for (int nn = 0; nn < N; ++nn)
            for (int oc = 0; oc < OC; ++oc)
              for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox)
                  dmat(nn * OH * OW + oy * OW + ox, oc) =
                      n.grad.data[((static_cast<std::size_t>(nn) * OC + oc) * OH + oy) * OW + ox];

          if (t.nodes_[b].needs_grad) {
            Tensor<T> gb(t.nodes_[b].value.shape);
            for (int r = 0; r < dmat.rows(); ++r)
              for (int oc = 0; oc < OC; ++oc) gb[oc] += dmat(r, oc);
            t.accumulate(b, gb);
          }
          if (t.nodes_[w].needs_grad) {
            Tensor<T> gwmat({K, OC});
            gwmat.mat().noalias() = col_cache->mat().transpose() * dmat.mat();
            Tensor<T> gw(t.nodes_[w].value.shape);
            for (int oc = 0; oc < OC; ++oc)
              for (int k = 0; k < K; ++k)
                gw.data[static_cast<std::size_t>(oc) * K + k] = gwmat(k, oc);
            t.accumulate(w, gw);
          }
          if (t.nodes_[x].needs_grad) {
            const auto& wv2 = t.nodes_[w].value;
            Tensor<T> wmat2({K, OC});
            for (int oc = 0; oc < OC; ++oc)
              for (int k = 0; k < K; ++k)
                wmat2(k, oc) = wv2.data[static_cast<std::size_t>(oc) * K + k];
            Tensor<T> dcol({N * OH * OW, K});
            dcol.mat().noalias() = dmat.mat() * wmat2.mat().transpose();
            Tensor<T> gx(t.nodes_[x].value.shape);
            for (int nn = 0; nn < N; ++nn)
              for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox) {
                  const T* row =
                      &dcol.data[(static_cast<std::size_t>(nn) * OH * OW + oy * OW + ox) * K];
                  for (int c = 0; c < C; ++c)
                    for (int ky = 0; ky < KH; ++ky) {
                      T* dst = &gx.data[((static_cast<std::size_t>(nn) * C + c) * H +
                                         (oy * stride + ky)) * W + ox * stride];
                      for (int kx = 0; kx < KW; ++kx) dst[kx] += row[(c * KH + ky) * KW + kx];
                    }
                }
            t.accumulate(x, gx);
          }
        });
  }

  // ---- backward ----

  void backward(Ref loss) {
    if (!grad_enabled_) throw std::logic_error("backward on a no-grad tape");
    if (nodes_[loss].value.numel() != 1) throw std::logic_error("backward: loss must be scalar");
    for (auto& n : nodes_)
      if (n.needs_grad) n.grad = Tensor<T>::zeros(n.value.shape);
    nodes_[loss].grad = Tensor<T>::full({1, 1}, T(1));
    nodes_[loss].grad.shape = nodes_[loss].value.shape;
    for (Ref i = loss; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.needs_grad && n.back) n.back(*this, n);
    }
    for (auto& n : nodes_)
      if (n.bound)
        for (int i = 0; i < n.grad.numel(); ++i) n.bound->grad[i] += n.grad[i];
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool needs_grad = false;
    Parameter<T>* bound = nullptr;
    std::function<void(Tape&, const Node&)> back;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;

  void check_same(Ref a, Ref b, const char* op) const {
    if (!nodes_[a].value.same_shape(nodes_[b].value))
      throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }

  Ref push(Tensor<T> v, bool needs_grad, Parameter<T>* bound, std::vector<Ref> parents) {
    Node n;
    n.value = std::move(v);
    n.bound = bound;
    n.needs_grad = needs_grad;
    for (Ref p : parents) n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Ref>(nodes_.size() - 1);
  }

  Ref unary_or_binary(Tensor<T> out, std::vector<Ref> parents,
                      std::function<void(Tape&, const Node&)> back) {
    Ref r = push(std::move(out), false, nullptr, parents);
    if (grad_enabled_ && nodes_[r].needs_grad && back) nodes_[r].back = std::move(back);
    return r;
  }

  void set_back(Ref r, std::function<void(Tape&, const Node&)> back) {
    if (grad_enabled_ && nodes_[r].needs_grad) nodes_[r].back = std::move(back);
  }

  void accumulate(Ref r, const Tensor<T>& g) {
    if (!nodes_[r].needs_grad) return;
    auto& dst = nodes_[r].grad;
    for (int i = 0; i < dst.numel(); ++i) dst[i] += g[i];
  }

  void accumulate_scaled(Ref r, const Tensor<T>& g, T s) {
    if (!nodes_[r].needs_grad) return;
    auto& dst = nodes_[r].grad;
    for (int i = 0; i < dst.numel(); ++i) dst[i] += s * g[i];
  }

  void accumulate_broadcast(Ref r, T v) {
    if (!nodes_[r].needs_grad) return;
    auto& dst = nodes_[r].grad;
    for (int i = 0; i < dst.numel(); ++i) dst[i] += v;
  }
};

}  // namespace ahand
