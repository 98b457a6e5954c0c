#pragma once

// Differentiable building blocks of the velocity network. Every layer is a
// small struct of parameter indices plus forward/backward free of hidden
// state: forward fills a cache, backward consumes it and accumulates into a
// gradient store with the same layout as the weights.

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "rfgen/errors.hpp"
#include "rfgen/image.hpp"
#include "rfgen/params.hpp"

namespace rfgen::nn {

template <typename T>
using Mat = Planes<T>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct Grid {
  int h = 0;
  int w = 0;
  int pixels() const { return h * w; }
  Grid half() const { return {h / 2, w / 2}; }
  Grid twice() const { return {h * 2, w * 2}; }
};

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using T = typename Derived::Scalar;
  return (T(1) + (-x).exp()).inverse();
}

template <typename T>
Mat<T> silu(const Mat<T>& x) {
  return (x.array() * sigmoid(x.array())).matrix();
}

template <typename T>
Vec<T> silu(const Vec<T>& x) {
  return (x.array() * sigmoid(x.array())).matrix();
}

/// d silu / dx evaluated at the pre-activation `x`, multiplied into `grad`.
template <typename M>
M silu_backward(const M& x, const M& grad) {
  const auto s = sigmoid(x.array()).eval();
  return (grad.array() * (s + x.array() * s * (1 - s))).matrix();
}

template <typename T>
void check_finite(const Mat<T>& m, const std::string& layer) {
  if (!m.allFinite()) throw NumericError(layer, "non-finite activation");
}

/// Sinusoidal embedding: first half sin(f_i t), second half cos(f_i t) with
/// f_i = 10000^(i / half), i = 0..half-1.
template <typename T>
Vec<T> sinusoidal_embedding(T t, int dim) {
  if (dim < 2 || dim % 2 != 0) throw ArgumentError("embedding dimension must be even and >= 2");
  const int half = dim / 2;
  Vec<T> out(dim);
  for (int i = 0; i < half; ++i) {
    const T f = std::pow(T(10000), T(i) / T(half));
    out(i) = std::sin(f * t);
    out(half + i) = std::cos(f * t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// im2col for 3x3, stride 1, zero padding 1.

template <typename T>
Mat<T> im2col3x3(const Mat<T>& x, Grid g) {
  const int c = static_cast<int>(x.rows());
  Mat<T> cols = Mat<T>::Zero(c * 9, g.pixels());
  for (int ci = 0; ci < c; ++ci) {
    const T* src = x.row(ci).data();
    for (int k = 0; k < 9; ++k) {
      const int dy = k / 3 - 1, dx = k % 3 - 1;
      T* dst = cols.row(ci * 9 + k).data();
      const int x0 = std::max(0, -dx), x1 = std::min(g.w, g.w - dx);
      for (int y = std::max(0, -dy); y < std::min(g.h, g.h - dy); ++y) {
        const T* s = src + (y + dy) * g.w + dx;
        T* d = dst + y * g.w;
        for (int xx = x0; xx < x1; ++xx) d[xx] = s[xx];
      }
    }
  }
  return cols;
}

template <typename T>
Mat<T> col2im3x3(const Mat<T>& cols, int channels, Grid g) {
  Mat<T> x = Mat<T>::Zero(channels, g.pixels());
  for (int ci = 0; ci < channels; ++ci) {
    T* dst = x.row(ci).data();
    for (int k = 0; k < 9; ++k) {
      const int dy = k / 3 - 1, dx = k % 3 - 1;
      const T* src = cols.row(ci * 9 + k).data();
      const int x0 = std::max(0, -dx), x1 = std::min(g.w, g.w - dx);
      for (int y = std::max(0, -dy); y < std::min(g.h, g.h - dy); ++y) {
        T* d = dst + (y + dy) * g.w + dx;
        const T* s = src + y * g.w;
        for (int xx = x0; xx < x1; ++xx) d[xx] += s[xx];
      }
    }
  }
  return x;
}

// ---------------------------------------------------------------------------

template <typename T>
struct ConvCache {
  Mat<T> cols;
};

/// 3x3 (same padding) or 1x1 convolution. Weight is cout x (cin*k*k).
struct Conv2d {
  std::string name;
  int weight = -1, bias = -1;
  int cin = 0, cout = 0, k = 3;

  template <typename T>
  static Conv2d create(ParamStore<T>& store, std::string name, int cin, int cout, int k) {
    Conv2d c;
    c.name = name;
    c.cin = cin;
    c.cout = cout;
    c.k = k;
    c.weight = store.add(name + ".weight", cout, cin * k * k);
    c.bias = store.add(name + ".bias", cout, 1);
    return c;
  }

  template <typename T>
  Mat<T> forward(const ParamStore<T>& p, const Mat<T>& x, Grid g, ConvCache<T>& cache) const {
    if (x.rows() != cin || x.cols() != g.pixels()) throw ArgumentError(name + ": input shape mismatch");
    cache.cols = (k == 3) ? im2col3x3(x, g) : x;
    Mat<T> y = p[weight] * cache.cols;
    y.colwise() += p[bias].col(0);
    return y;
  }

  template <typename T>
  Mat<T> backward(const ParamStore<T>& p, ParamStore<T>& grad, const ConvCache<T>& cache, const Mat<T>& dy,
                  Grid g) const {
    grad[weight].noalias() += dy * cache.cols.transpose();
    grad[bias].col(0) += dy.rowwise().sum();
    Mat<T> dcols = p[weight].transpose() * dy;
    return (k == 3) ? col2im3x3(dcols, cin, g) : dcols;
  }
};

/// Dense layer on column vectors; weight is out x in.
struct Linear {
  std::string name;
  int weight = -1, bias = -1;
  int in = 0, out = 0;

  template <typename T>
  static Linear create(ParamStore<T>& store, std::string name, int in, int out) {
    Linear l;
    l.name = name;
    l.in = in;
    l.out = out;
    l.weight = store.add(name + ".weight", out, in);
    l.bias = store.add(name + ".bias", out, 1);
    return l;
  }

  template <typename T>
  Vec<T> forward(const ParamStore<T>& p, const Vec<T>& x) const {
    return p[weight] * x + p[bias].col(0);
  }

  template <typename T>
  Vec<T> backward(const ParamStore<T>& p, ParamStore<T>& grad, const Vec<T>& x, const Vec<T>& dy) const {
    grad[weight].noalias() += dy * x.transpose();
    grad[bias].col(0) += dy;
    return p[weight].transpose() * dy;
  }
};

// ---------------------------------------------------------------------------
// Resampling. Pooling and upsampling are exact adjoints up to the factor 4.

template <typename T>
Mat<T> avg_pool2(const Mat<T>& x, Grid g) {
  const Grid o = g.half();
  Mat<T> y(x.rows(), o.pixels());
  for (Eigen::Index c = 0; c < x.rows(); ++c) {
    for (int yy = 0; yy < o.h; ++yy) {
      for (int xx = 0; xx < o.w; ++xx) {
        const int i = 2 * yy * g.w + 2 * xx;
        y(c, yy * o.w + xx) = T(0.25) * (x(c, i) + x(c, i + 1) + x(c, i + g.w) + x(c, i + g.w + 1));
      }
    }
  }
  return y;
}

template <typename T>
Mat<T> avg_pool2_backward(const Mat<T>& dy, Grid g) {
  const Grid o = g.half();
  Mat<T> dx(dy.rows(), g.pixels());
  for (Eigen::Index c = 0; c < dy.rows(); ++c) {
    for (int yy = 0; yy < o.h; ++yy) {
      for (int xx = 0; xx < o.w; ++xx) {
        const T v = T(0.25) * dy(c, yy * o.w + xx);
        const int i = 2 * yy * g.w + 2 * xx;
        dx(c, i) = v;
        dx(c, i + 1) = v;
        dx(c, i + g.w) = v;
        dx(c, i + g.w + 1) = v;
      }
    }
  }
  return dx;
}

/// Nearest-neighbour x2 upsampling from grid `g` (the coarse grid).
template <typename T>
Mat<T> upsample2(const Mat<T>& x, Grid g) {
  const Grid o = g.twice();
  Mat<T> y(x.rows(), o.pixels());
  for (Eigen::Index c = 0; c < x.rows(); ++c) {
    for (int yy = 0; yy < o.h; ++yy) {
      for (int xx = 0; xx < o.w; ++xx) y(c, yy * o.w + xx) = x(c, (yy / 2) * g.w + xx / 2);
    }
  }
  return y;
}

template <typename T>
Mat<T> upsample2_backward(const Mat<T>& dy, Grid g) {
  const Grid o = g.twice();
  Mat<T> dx = Mat<T>::Zero(dy.rows(), g.pixels());
  for (Eigen::Index c = 0; c < dy.rows(); ++c) {
    for (int yy = 0; yy < o.h; ++yy) {
      for (int xx = 0; xx < o.w; ++xx) dx(c, (yy / 2) * g.w + xx / 2) += dy(c, yy * o.w + xx);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------

template <typename T>
struct ResBlockCache {
  Mat<T> x;
  Mat<T> h;  // conv1 output plus time projection (pre-activation)
  ConvCache<T> conv1, conv2, skip;
};

/// silu -> conv3x3 -> (+ time projection) -> silu -> conv3x3, plus a 1x1
/// projection on the skip path when the width changes.
struct ResBlock {
  std::string name;
  Conv2d conv1, conv2;
  Linear time_proj;
  bool has_skip = false;
  Conv2d skip;

  template <typename T>
  static ResBlock create(ParamStore<T>& store, const std::string& name, int cin, int cout, int time_dim) {
    ResBlock b;
    b.name = name;
    b.conv1 = Conv2d::create(store, name + ".conv1", cin, cout, 3);
    b.time_proj = Linear::create(store, name + ".time_proj", time_dim, cout);
    b.conv2 = Conv2d::create(store, name + ".conv2", cout, cout, 3);
    b.has_skip = cin != cout;
    if (b.has_skip) b.skip = Conv2d::create(store, name + ".skip", cin, cout, 1);
    return b;
  }

  template <typename T>
  Mat<T> forward(const ParamStore<T>& p, const Mat<T>& x, Grid g, const Vec<T>& time_act,
                 ResBlockCache<T>& cache) const {
    cache.x = x;
    cache.h = conv1.forward(p, silu(x), g, cache.conv1);
    cache.h.colwise() += time_proj.forward(p, time_act);
    Mat<T> out = conv2.forward(p, silu(cache.h), g, cache.conv2);
    if (has_skip) {
      out += skip.forward(p, x, g, cache.skip);
    } else {
      out += x;
    }
    check_finite(out, name);
    return out;
  }

  template <typename T>
  Mat<T> backward(const ParamStore<T>& p, ParamStore<T>& grad, const ResBlockCache<T>& cache, const Mat<T>& dout,
                  Grid g, const Vec<T>& time_act, Vec<T>& dtime_act) const {
    Mat<T> dx = has_skip ? skip.backward(p, grad, cache.skip, dout, g) : dout;
    const Mat<T> dh = silu_backward(cache.h, conv2.backward(p, grad, cache.conv2, dout, g));
    const Vec<T> dproj = dh.rowwise().sum();
    dtime_act += time_proj.backward(p, grad, time_act, dproj);
    dx += silu_backward(cache.x, conv1.backward(p, grad, cache.conv1, dh, g));
    return dx;
  }
};

// ---------------------------------------------------------------------------

template <typename T>
struct AttentionCache {
  Mat<T> x, context, q, k, v, o;
  std::vector<Mat<T>> attn;  // per head: tokens x pixels, softmax over tokens
};

/// Multi-head cross-attention from pixels (queries) to context tokens
/// (keys/values), added residually: out = x + Wo * attn(x, ctx) + bo.
struct CrossAttention {
  std::string name;
  int wq = -1, wk = -1, wv = -1, wo = -1, bo = -1;
  int channels = 0, context_dim = 0, heads = 1;

  template <typename T>
  static CrossAttention create(ParamStore<T>& store, const std::string& name, int channels, int context_dim,
                               int heads) {
    if (heads < 1 || channels % heads != 0) throw ArgumentError(name + ": channels must be divisible by heads");
    CrossAttention a;
    a.name = name;
    a.channels = channels;
    a.context_dim = context_dim;
    a.heads = heads;
    a.wq = store.add(name + ".q", channels, channels);
    a.wk = store.add(name + ".k", channels, context_dim);
    a.wv = store.add(name + ".v", channels, context_dim);
    a.wo = store.add(name + ".out.weight", channels, channels);
    a.bo = store.add(name + ".out.bias", channels, 1);
    return a;
  }

  /// `context` is context_dim x tokens.
  template <typename T>
  Mat<T> forward(const ParamStore<T>& p, const Mat<T>& x, const Mat<T>& context, AttentionCache<T>& c) const {
    const int d = channels / heads;
    const T scale = T(1) / std::sqrt(T(d));
    c.x = x;
    c.context = context;
    c.q = p[wq] * x;
    c.k = p[wk] * context;
    c.v = p[wv] * context;
    c.o.resize(channels, x.cols());
    c.attn.resize(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Mat<T> s = scale * (c.k.middleRows(h * d, d).transpose() * c.q.middleRows(h * d, d));
      const auto mx = s.colwise().maxCoeff().eval();
      s.rowwise() -= mx;
      s = s.array().exp().matrix();
      const auto sum = s.colwise().sum().eval();
      for (Eigen::Index j = 0; j < s.cols(); ++j) s.col(j) /= sum(j);
      c.o.middleRows(h * d, d) = c.v.middleRows(h * d, d) * s;
      c.attn[static_cast<std::size_t>(h)] = std::move(s);
    }
    Mat<T> out = x + p[wo] * c.o;
    out.colwise() += p[bo].col(0);
    check_finite(out, name);
    return out;
  }

  /// Returns dx; accumulates into dcontext.
  template <typename T>
  Mat<T> backward(const ParamStore<T>& p, ParamStore<T>& grad, const AttentionCache<T>& c, const Mat<T>& dout,
                  Mat<T>& dcontext) const {
    const int d = channels / heads;
    const T scale = T(1) / std::sqrt(T(d));
    grad[wo].noalias() += dout * c.o.transpose();
    grad[bo].col(0) += dout.rowwise().sum();
    const Mat<T> dO = p[wo].transpose() * dout;
    Mat<T> dq(channels, c.x.cols()), dk(channels, c.context.cols()), dv(channels, c.context.cols());
    for (int h = 0; h < heads; ++h) {
      const Mat<T>& a = c.attn[static_cast<std::size_t>(h)];
      const auto dOh = dO.middleRows(h * d, d);
      dv.middleRows(h * d, d) = dOh * a.transpose();
      const Mat<T> da = c.v.middleRows(h * d, d).transpose() * dOh;
      Mat<T> ds = a.cwiseProduct(da);
      const auto colsum = ds.colwise().sum().eval();
      ds -= (a.array().rowwise() * colsum.array()).matrix();
      ds *= scale;
      dk.middleRows(h * d, d) = c.q.middleRows(h * d, d) * ds.transpose();
      dq.middleRows(h * d, d) = c.k.middleRows(h * d, d) * ds;
    }
    grad[wq].noalias() += dq * c.x.transpose();
    grad[wk].noalias() += dk * c.context.transpose();
    grad[wv].noalias() += dv * c.context.transpose();
    dcontext.noalias() += p[wk].transpose() * dk + p[wv].transpose() * dv;
    return dout + p[wq].transpose() * dq;
  }
};

}  // namespace rfgen::nn
