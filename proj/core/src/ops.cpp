// Copyright 2026 The mscanet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "msca/ops.hpp"

#include <fmt/format.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "msca/errors.hpp"

namespace msca::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// Gradient buffer of input `i`, or nullptr if that input does not need one.
double* grad_of(detail::Node& self, std::size_t i) {
  auto& in = self.inputs[i];
  if (!in || !in->requires_grad) return nullptr;
  return in->grad_buffer().data();
}

const double* value_of(const detail::Node& self, std::size_t i) {
  return self.inputs[i]->value.data();
}

// Reductions and exp below use fixed-alignment buffers so results do not depend on where the
// operands happen to live in memory.
double plain_sum(const double* p, std::size_t n) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (int k = 0; k < 4; ++k) acc[k] += p[i + k];
  }
  for (; i < n; ++i) acc[0] += p[i];
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

double plain_dot(const double* a, const double* b, std::size_t n) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (int k = 0; k < 4; ++k) acc[k] += a[i + k] * b[i + k];
  }
  for (; i < n; ++i) acc[0] += a[i] * b[i];
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

// p[i] = exp(p[i] - shift[i]) (or exp(p[i] - shift0) when shift is null).
void exp_shifted(double* p, const double* shift, double shift0, std::size_t n,
                 Eigen::ArrayXd& scratch) {
  if (static_cast<std::size_t>(scratch.size()) < n) scratch.resize(static_cast<Eigen::Index>(n));
  auto head = scratch.head(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) head[i] = p[i] - (shift != nullptr ? shift[i] : shift0);
  head = head.exp();
  std::copy(head.data(), head.data() + n, p);
}

void im2col(const double* x, int channels, int h, int w, int kh, int kw, int pad, int dil,
            int ho, int wo, double* cols) {
  for (int c = 0; c < channels; ++c) {
    const double* plane = x + static_cast<std::size_t>(c) * h * w;
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        double* row = cols + ((static_cast<std::size_t>(c) * kh + i) * kw + j) * ho * wo;
        const int oy = i * dil - pad;
        const int ox = j * dil - pad;
        for (int y = 0; y < ho; ++y) {
          const int iy = y + oy;
          double* dst = row + static_cast<std::size_t>(y) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * w;
          for (int xx = 0; xx < wo; ++xx) {
            const int ix = xx + ox;
            dst[xx] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, int channels, int h, int w, int kh, int kw, int pad, int dil,
                int ho, int wo, double* x) {
  for (int c = 0; c < channels; ++c) {
    double* plane = x + static_cast<std::size_t>(c) * h * w;
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const double* row = cols + ((static_cast<std::size_t>(c) * kh + i) * kw + j) * ho * wo;
        const int oy = i * dil - pad;
        const int ox = j * dil - pad;
        for (int y = 0; y < ho; ++y) {
          const int iy = y + oy;
          if (iy < 0 || iy >= h) continue;
          const double* src = row + static_cast<std::size_t>(y) * wo;
          double* dst = plane + static_cast<std::size_t>(iy) * w;
          for (int xx = 0; xx < wo; ++xx) {
            const int ix = xx + ox;
            if (ix >= 0 && ix < w) dst[ix] += src[xx];
          }
        }
      }
    }
  }
}

struct ConvGeometry {
  Shape x;
  Shape w;
  int ho = 0;
  int wo = 0;
  Conv2dSpec spec;
  [[nodiscard]] bool depthwise() const {
    return spec.groups == x.c && w.c == 1 && w.n == x.c;
  }
  [[nodiscard]] bool pointwise() const {
    return w.h == 1 && w.w == 1 && spec.padding == 0;
  }
};

void depthwise_forward(const ConvGeometry& g, const double* x, const double* w, const double* b,
                       double* out) {
  const int kh = g.w.h, kw = g.w.w, d = g.spec.dilation, p = g.spec.padding;
  const int H = g.x.h, W = g.x.w, Ho = g.ho, Wo = g.wo;
  for (int n = 0; n < g.x.n; ++n) {
    for (int c = 0; c < g.x.c; ++c) {
      const double* xp = x + (static_cast<std::size_t>(n) * g.x.c + c) * H * W;
      double* op = out + (static_cast<std::size_t>(n) * g.x.c + c) * Ho * Wo;
      std::fill(op, op + static_cast<std::size_t>(Ho) * Wo, b != nullptr ? b[c] : 0.0);
      const double* wp = w + static_cast<std::size_t>(c) * kh * kw;
      for (int i = 0; i < kh; ++i) {
        const int oy = i * d - p;
        const int y0 = std::max(0, -oy), y1 = std::min(Ho, H - oy);
        for (int j = 0; j < kw; ++j) {
          const int ox = j * d - p;
          const int x0 = std::max(0, -ox), x1 = std::min(Wo, W - ox);
          const double wv = wp[i * kw + j];
          for (int y = y0; y < y1; ++y) {
            const double* src = xp + static_cast<std::size_t>(y + oy) * W + ox;
            double* dst = op + static_cast<std::size_t>(y) * Wo;
            for (int xx = x0; xx < x1; ++xx) dst[xx] += wv * src[xx];
          }
        }
      }
    }
  }
}

void depthwise_backward(const ConvGeometry& g, const double* x, const double* w,
                        const double* gout, double* gx, double* gw, double* gb) {
  const int kh = g.w.h, kw = g.w.w, d = g.spec.dilation, p = g.spec.padding;
  const int H = g.x.h, W = g.x.w, Ho = g.ho, Wo = g.wo;
  for (int n = 0; n < g.x.n; ++n) {
    for (int c = 0; c < g.x.c; ++c) {
      const std::size_t in_off = (static_cast<std::size_t>(n) * g.x.c + c) * H * W;
      const double* xp = x + in_off;
      const double* gp = gout + (static_cast<std::size_t>(n) * g.x.c + c) * Ho * Wo;
      if (gb != nullptr) {
        double s = 0.0;
#pragma omp simd reduction(+ : s)
        for (std::size_t k = 0; k < static_cast<std::size_t>(Ho) * Wo; ++k) s += gp[k];
        gb[c] += s;
      }
      const double* wp = w + static_cast<std::size_t>(c) * kh * kw;
      for (int i = 0; i < kh; ++i) {
        const int oy = i * d - p;
        const int y0 = std::max(0, -oy), y1 = std::min(Ho, H - oy);
        for (int j = 0; j < kw; ++j) {
          const int ox = j * d - p;
          const int x0 = std::max(0, -ox), x1 = std::min(Wo, W - ox);
          const double wv = wp[i * kw + j];
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const std::size_t src_row = static_cast<std::size_t>(y + oy) * W + ox;
            const double* grow = gp + static_cast<std::size_t>(y) * Wo;
            if (gx != nullptr) {
              double* dst = gx + in_off + src_row;
              for (int xx = x0; xx < x1; ++xx) dst[xx] += wv * grow[xx];
            }
            if (gw != nullptr) {
              const double* src = xp + src_row;
#pragma omp simd reduction(+ : acc)
              for (int xx = x0; xx < x1; ++xx) acc += grow[xx] * src[xx];
            }
          }
          if (gw != nullptr) gw[static_cast<std::size_t>(c) * kh * kw + i * kw + j] += acc;
        }
      }
    }
  }
}

// Index mapping for size-1 broadcasting on each axis.
struct Broadcast {
  Shape out;
  std::size_t sa[4]{};
  std::size_t sb[4]{};

  static void strides(const Shape& s, const Shape& o, std::size_t* st) {
    const std::size_t sw = 1, sh = static_cast<std::size_t>(s.w), sc = sh * s.h,
                      sn = sc * s.c;
    st[0] = (s.n == 1 && o.n != 1) ? 0 : sn;
    st[1] = (s.c == 1 && o.c != 1) ? 0 : sc;
    st[2] = (s.h == 1 && o.h != 1) ? 0 : sh;
    st[3] = (s.w == 1 && o.w != 1) ? 0 : sw;
  }

  Broadcast(const Shape& a, const Shape& b, const char* op) {
    auto dim = [&](int x, int y) {
      if (x == y || y == 1) return x;
      if (x == 1) return y;
      throw ShapeError(fmt::format("{}: cannot broadcast {} with {}", op, a.str(), b.str()));
    };
    out = Shape{dim(a.n, b.n), dim(a.c, b.c), dim(a.h, b.h), dim(a.w, b.w)};
    strides(a, out, sa);
    strides(b, out, sb);
  }

  template <typename F>
  void each(F&& f) const {
    std::size_t o = 0;
    for (int n = 0; n < out.n; ++n) {
      for (int c = 0; c < out.c; ++c) {
        for (int h = 0; h < out.h; ++h) {
          std::size_t ia = n * sa[0] + c * sa[1] + h * sa[2];
          std::size_t ib = n * sb[0] + c * sb[1] + h * sb[2];
          for (int w = 0; w < out.w; ++w, ++o, ia += sa[3], ib += sb[3]) f(o, ia, ib);
        }
      }
    }
  }
};

enum class BinOp { kAdd, kSub, kMul };

Tensor same_shape_binary(const Tensor& a, const Tensor& b, BinOp op, std::vector<double> out) {
  const double* av = a.data().data();
  const double* bv = b.data().data();
  const std::size_t n = out.size();
  double* o = out.data();
  switch (op) {
    case BinOp::kAdd:
      for (std::size_t i = 0; i < n; ++i) o[i] = av[i] + bv[i];
      break;
    case BinOp::kSub:
      for (std::size_t i = 0; i < n; ++i) o[i] = av[i] - bv[i];
      break;
    case BinOp::kMul:
      for (std::size_t i = 0; i < n; ++i) o[i] = av[i] * bv[i];
      break;
  }
  return make_result(a.shape(), std::move(out), {&a, &b}, [op](detail::Node& self) {
    const double* g = self.grad.data();
    const std::size_t n = self.grad.size();
    double* ga = grad_of(self, 0);
    double* gb = grad_of(self, 1);
    if (op == BinOp::kMul) {
      const double* av = value_of(self, 0);
      const double* bv = value_of(self, 1);
      if (ga) {
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
      }
      if (gb) {
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
      }
      return;
    }
    if (ga) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    }
    if (gb) {
      const double sign = op == BinOp::kSub ? -1.0 : 1.0;
      for (std::size_t i = 0; i < n; ++i) gb[i] += sign * g[i];
    }
  });
}

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
  static constexpr const char* kNames[] = {"add", "sub", "mul"};
  const Broadcast bc(a.shape(), b.shape(), kNames[static_cast<int>(op)]);
  std::vector<double> out(bc.out.numel());
  const double* av = a.data().data();
  const double* bv = b.data().data();
  if (a.shape() == b.shape()) return same_shape_binary(a, b, op, std::move(out));
  switch (op) {
    case BinOp::kAdd:
      bc.each([&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = av[ia] + bv[ib]; });
      break;
    case BinOp::kSub:
      bc.each([&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = av[ia] - bv[ib]; });
      break;
    case BinOp::kMul:
      bc.each([&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = av[ia] * bv[ib]; });
      break;
  }
  return make_result(bc.out, std::move(out), {&a, &b}, [bc, op](detail::Node& self) {
    const double* g = self.grad.data();
    double* ga = grad_of(self, 0);
    double* gb = grad_of(self, 1);
    const double* av = value_of(self, 0);
    const double* bv = value_of(self, 1);
    bc.each([&](std::size_t o, std::size_t ia, std::size_t ib) {
      switch (op) {
        case BinOp::kAdd:
          if (ga) ga[ia] += g[o];
          if (gb) gb[ib] += g[o];
          break;
        case BinOp::kSub:
          if (ga) ga[ia] += g[o];
          if (gb) gb[ib] -= g[o];
          break;
        case BinOp::kMul:
          if (ga) ga[ia] += g[o] * bv[ib];
          if (gb) gb[ib] += g[o] * av[ia];
          break;
      }
    });
  });
}

// y = f(x) with dy/dx = df(x, y).
template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df) {
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result(x.shape(), std::move(out), {&x}, [df](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (gx == nullptr) return;
    const double* xv = value_of(self, 0);
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      gx[i] += self.grad[i] * df(xv[i], self.value[i]);
    }
  });
}

void require_param_shape(const Tensor& t, int channels, const char* what) {
  if (!t.defined()) return;
  if (t.shape() != Shape{1, channels, 1, 1}) {
    throw ShapeError(fmt::format("{}: expected parameter of shape (1, {}, 1, 1), got {}", what,
                                 channels, t.shape().str()));
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dSpec spec) {
  ConvGeometry g{x.shape(), weight.shape(), 0, 0, spec};
  if (spec.groups < 1 || spec.dilation < 1 || spec.padding < 0) {
    throw ConfigError("conv2d: groups/dilation must be >= 1 and padding >= 0");
  }
  if (g.x.c % spec.groups != 0 || g.w.n % spec.groups != 0 || g.w.c != g.x.c / spec.groups) {
    throw ShapeError(fmt::format("conv2d: input {} incompatible with weight {} at groups={}",
                                 g.x.str(), g.w.str(), spec.groups));
  }
  require_param_shape(bias, g.w.n, "conv2d bias");
  g.ho = g.x.h + 2 * spec.padding - spec.dilation * (g.w.h - 1);
  g.wo = g.x.w + 2 * spec.padding - spec.dilation * (g.w.w - 1);
  if (g.ho < 1 || g.wo < 1) {
    throw ShapeError(fmt::format("conv2d: input {} too small for kernel {}", g.x.str(), g.w.str()));
  }
  const Shape out_shape{g.x.n, g.w.n, g.ho, g.wo};
  std::vector<double> out(out_shape.numel());
  const double* xv = x.data().data();
  const double* wv = weight.data().data();
  const double* bv = bias.defined() ? bias.data().data() : nullptr;

  if (g.depthwise()) {
    depthwise_forward(g, xv, wv, bv, out.data());
    return make_result(out_shape, std::move(out), {&x, &weight, &bias}, [g](detail::Node& self) {
      depthwise_backward(g, value_of(self, 0), value_of(self, 1), self.grad.data(),
                         grad_of(self, 0), grad_of(self, 1),
                         self.inputs[2] ? grad_of(self, 2) : nullptr);
    });
  }

  const int groups = spec.groups;
  const int cg = g.x.c / groups;
  const int og = g.w.n / groups;
  const int K = cg * g.w.h * g.w.w;
  const std::size_t hw = g.x.plane();
  const std::size_t ohw = static_cast<std::size_t>(g.ho) * g.wo;
  std::vector<double> cols(g.pointwise() ? 0 : static_cast<std::size_t>(K) * ohw);
  for (int n = 0; n < g.x.n; ++n) {
    for (int gi = 0; gi < groups; ++gi) {
      const double* xin = xv + (static_cast<std::size_t>(n) * g.x.c + gi * cg) * hw;
      const double* cp = xin;
      if (!g.pointwise()) {
        im2col(xin, cg, g.x.h, g.x.w, g.w.h, g.w.w, spec.padding, spec.dilation, g.ho, g.wo,
               cols.data());
        cp = cols.data();
      }
      MapMat o(out.data() + (static_cast<std::size_t>(n) * g.w.n + gi * og) * ohw, og, ohw);
      o.noalias() = CMapMat(wv + static_cast<std::size_t>(gi) * og * K, og, K) *
                    CMapMat(cp, K, ohw);
      if (bv != nullptr) {
        for (int c = 0; c < og; ++c) o.row(c).array() += bv[gi * og + c];
      }
    }
  }
  return make_result(out_shape, std::move(out), {&x, &weight, &bias}, [g](detail::Node& self) {
    const int groups = g.spec.groups;
    const int cg = g.x.c / groups;
    const int og = g.w.n / groups;
    const int K = cg * g.w.h * g.w.w;
    const std::size_t hw = g.x.plane();
    const std::size_t ohw = static_cast<std::size_t>(g.ho) * g.wo;
    const double* xv = value_of(self, 0);
    const double* wv = value_of(self, 1);
    double* gx = grad_of(self, 0);
    double* gw = grad_of(self, 1);
    double* gb = self.inputs[2] ? grad_of(self, 2) : nullptr;
    std::vector<double> cols(g.pointwise() ? 0 : static_cast<std::size_t>(K) * ohw);
    std::vector<double> dcols(g.pointwise() ? 0 : static_cast<std::size_t>(K) * ohw);
    for (int n = 0; n < g.x.n; ++n) {
      for (int gi = 0; gi < groups; ++gi) {
        const std::size_t in_off = (static_cast<std::size_t>(n) * g.x.c + gi * cg) * hw;
        CMapMat dout(self.grad.data() + (static_cast<std::size_t>(n) * g.w.n + gi * og) * ohw, og,
                     ohw);
        CMapMat wg(wv + static_cast<std::size_t>(gi) * og * K, og, K);
        if (gb != nullptr) {
          for (int c = 0; c < og; ++c) gb[gi * og + c] += plain_sum(dout.data() + c * ohw, ohw);
        }
        if (gw != nullptr) {
          const double* cp = xv + in_off;
          if (!g.pointwise()) {
            im2col(xv + in_off, cg, g.x.h, g.x.w, g.w.h, g.w.w, g.spec.padding, g.spec.dilation,
                   g.ho, g.wo, cols.data());
            cp = cols.data();
          }
          MapMat(gw + static_cast<std::size_t>(gi) * og * K, og, K).noalias() +=
              dout * CMapMat(cp, K, ohw).transpose();
        }
        if (gx != nullptr) {
          if (g.pointwise()) {
            MapMat(gx + in_off, K, ohw).noalias() += wg.transpose() * dout;
          } else {
            MapMat(dcols.data(), K, ohw).noalias() = wg.transpose() * dout;
            col2im_add(dcols.data(), cg, g.x.h, g.x.w, g.w.h, g.w.w, g.spec.padding,
                       g.spec.dilation, g.ho, g.wo, gx + in_off);
          }
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kMul); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor gelu(const Tensor& x) {
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + v * pdf;
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor channel_layer_norm(const Tensor& x, const Tensor& weight, const Tensor& bias, double eps) {
  const Shape s = x.shape();
  require_param_shape(weight, s.c, "channel_layer_norm weight");
  require_param_shape(bias, s.c, "channel_layer_norm bias");
  const std::size_t hw = s.plane();
  const std::size_t np = static_cast<std::size_t>(s.n) * hw;
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(np);
  std::vector<double> out(x.numel());
  const double* xv = x.data().data();
  const double* wv = weight.data().data();
  const double* bv = bias.data().data();
  for (int n = 0; n < s.n; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * s.c * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      double m = 0.0;
      for (int c = 0; c < s.c; ++c) m += xv[base + c * hw + p];
      m /= s.c;
      double var = 0.0;
      for (int c = 0; c < s.c; ++c) {
        const double d = xv[base + c * hw + p] - m;
        var += d * d;
      }
      var /= s.c;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[n * hw + p] = is;
      for (int c = 0; c < s.c; ++c) {
        const std::size_t i = base + c * hw + p;
        xhat[i] = (xv[i] - m) * is;
        out[i] = xhat[i] * wv[c] + bv[c];
      }
    }
  }
  return make_result(
      s, std::move(out), {&x, &weight, &bias},
      [s, hw, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
        const double* g = self.grad.data();
        double* gx = grad_of(self, 0);
        double* gw = grad_of(self, 1);
        double* gb = grad_of(self, 2);
        const double* wv = value_of(self, 1);
        for (int n = 0; n < s.n; ++n) {
          const std::size_t base = static_cast<std::size_t>(n) * s.c * hw;
          for (std::size_t p = 0; p < hw; ++p) {
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (int c = 0; c < s.c; ++c) {
              const std::size_t i = base + c * hw + p;
              if (gw) gw[c] += g[i] * xhat[i];
              if (gb) gb[c] += g[i];
              const double dxh = g[i] * wv[c];
              sum_dxh += dxh;
              sum_dxh_xh += dxh * xhat[i];
            }
            if (gx == nullptr) continue;
            const double is = inv_std[n * hw + p];
            for (int c = 0; c < s.c; ++c) {
              const std::size_t i = base + c * hw + p;
              const double dxh = g[i] * wv[c];
              gx[i] += is * (dxh - (sum_dxh + xhat[i] * sum_dxh_xh) / s.c);
            }
          }
        }
      });
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& weight, const Tensor& bias,
                  double eps) {
  const Shape s = x.shape();
  if (groups < 1 || s.c % groups != 0) {
    throw ConfigError(fmt::format("group_norm: {} channels not divisible into {} groups", s.c,
                                  groups));
  }
  require_param_shape(weight, s.c, "group_norm weight");
  require_param_shape(bias, s.c, "group_norm bias");
  const std::size_t hw = s.plane();
  const std::size_t gsize = static_cast<std::size_t>(s.c / groups) * hw;
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(static_cast<std::size_t>(s.n) * groups);
  std::vector<double> out(x.numel());
  const double* xv = x.data().data();
  const double* wv = weight.data().data();
  const double* bv = bias.data().data();
  for (int n = 0; n < s.n; ++n) {
    for (int gi = 0; gi < groups; ++gi) {
      const std::size_t base = (static_cast<std::size_t>(n) * groups + gi) * gsize;
      double m = 0.0;
      for (std::size_t i = 0; i < gsize; ++i) m += xv[base + i];
      m /= static_cast<double>(gsize);
      double var = 0.0;
      for (std::size_t i = 0; i < gsize; ++i) {
        const double d = xv[base + i] - m;
        var += d * d;
      }
      var /= static_cast<double>(gsize);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[n * groups + gi] = is;
      for (std::size_t i = 0; i < gsize; ++i) {
        const int c = gi * (s.c / groups) + static_cast<int>(i / hw);
        xhat[base + i] = (xv[base + i] - m) * is;
        out[base + i] = xhat[base + i] * wv[c] + bv[c];
      }
    }
  }
  return make_result(s, std::move(out), {&x, &weight, &bias},
                     [s, groups, hw, gsize, xhat = std::move(xhat),
                      inv_std = std::move(inv_std)](detail::Node& self) {
                       const double* g = self.grad.data();
                       double* gx = grad_of(self, 0);
                       double* gw = grad_of(self, 1);
                       double* gb = grad_of(self, 2);
                       const double* wv = value_of(self, 1);
                       const int cpg = s.c / groups;
                       const double count = static_cast<double>(gsize);
                       for (int n = 0; n < s.n; ++n) {
                         for (int gi = 0; gi < groups; ++gi) {
                           const std::size_t base =
                               (static_cast<std::size_t>(n) * groups + gi) * gsize;
                           double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                           for (std::size_t i = 0; i < gsize; ++i) {
                             const int c = gi * cpg + static_cast<int>(i / hw);
                             if (gw) gw[c] += g[base + i] * xhat[base + i];
                             if (gb) gb[c] += g[base + i];
                             const double dxh = g[base + i] * wv[c];
                             sum_dxh += dxh;
                             sum_dxh_xh += dxh * xhat[base + i];
                           }
                           if (gx == nullptr) continue;
                           const double is = inv_std[n * groups + gi];
                           for (std::size_t i = 0; i < gsize; ++i) {
                             const int c = gi * cpg + static_cast<int>(i / hw);
                             const double dxh = g[base + i] * wv[c];
                             gx[base + i] +=
                                 is * (dxh - (sum_dxh + xhat[base + i] * sum_dxh_xh) / count);
                           }
                         }
                       }
                     });
}

Tensor max_pool2x2(const Tensor& x) {
  const Shape s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ShapeError("max_pool2x2 needs even spatial extent, got " + s.str());
  }
  const Shape o{s.n, s.c, s.h / 2, s.w / 2};
  std::vector<double> out(o.numel());
  std::vector<std::size_t> arg(o.numel());
  const double* xv = x.data().data();
  std::size_t k = 0;
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const std::size_t base = static_cast<std::size_t>(nc) * s.plane();
    for (int y = 0; y < o.h; ++y) {
      for (int xx = 0; xx < o.w; ++xx, ++k) {
        std::size_t best = base + static_cast<std::size_t>(2 * y) * s.w + 2 * xx;
        for (const std::size_t cand : {best + 1, best + s.w, best + s.w + 1}) {
          if (xv[cand] > xv[best]) best = cand;
        }
        out[k] = xv[best];
        arg[k] = best;
      }
    }
  }
  return make_result(o, std::move(out), {&x}, [arg = std::move(arg)](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (gx == nullptr) return;
    for (std::size_t i = 0; i < arg.size(); ++i) gx[arg[i]] += self.grad[i];
  });
}

namespace {

struct LerpTap {
  int i0, i1;
  double w0, w1;
};

std::vector<LerpTap> upsample_taps(int in) {
  std::vector<LerpTap> taps(static_cast<std::size_t>(in) * 2);
  for (int o = 0; o < 2 * in; ++o) {
    const double src = std::max(0.0, (o + 0.5) / 2.0 - 0.5);
    const int i0 = std::min(static_cast<int>(src), in - 1);
    const int i1 = std::min(i0 + 1, in - 1);
    const double l1 = src - i0;
    taps[o] = LerpTap{i0, i1, 1.0 - l1, l1};
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear2x(const Tensor& x) {
  const Shape s = x.shape();
  const Shape o{s.n, s.c, 2 * s.h, 2 * s.w};
  const auto ty = upsample_taps(s.h);
  const auto tx = upsample_taps(s.w);
  std::vector<double> out(o.numel());
  const double* xv = x.data().data();
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const double* src = xv + static_cast<std::size_t>(nc) * s.plane();
    double* dst = out.data() + static_cast<std::size_t>(nc) * o.plane();
    for (int y = 0; y < o.h; ++y) {
      const LerpTap& a = ty[y];
      const double* r0 = src + static_cast<std::size_t>(a.i0) * s.w;
      const double* r1 = src + static_cast<std::size_t>(a.i1) * s.w;
      for (int xx = 0; xx < o.w; ++xx) {
        const LerpTap& b = tx[xx];
        dst[static_cast<std::size_t>(y) * o.w + xx] =
            a.w0 * (b.w0 * r0[b.i0] + b.w1 * r0[b.i1]) + a.w1 * (b.w0 * r1[b.i0] + b.w1 * r1[b.i1]);
      }
    }
  }
  return make_result(o, std::move(out), {&x}, [s, o, ty, tx](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (gx == nullptr) return;
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      double* dst = gx + static_cast<std::size_t>(nc) * s.plane();
      const double* g = self.grad.data() + static_cast<std::size_t>(nc) * o.plane();
      for (int y = 0; y < o.h; ++y) {
        const LerpTap& a = ty[y];
        double* r0 = dst + static_cast<std::size_t>(a.i0) * s.w;
        double* r1 = dst + static_cast<std::size_t>(a.i1) * s.w;
        for (int xx = 0; xx < o.w; ++xx) {
          const LerpTap& b = tx[xx];
          const double gv = g[static_cast<std::size_t>(y) * o.w + xx];
          r0[b.i0] += a.w0 * b.w0 * gv;
          r0[b.i1] += a.w0 * b.w1 * gv;
          r1[b.i0] += a.w1 * b.w0 * gv;
          r1[b.i1] += a.w1 * b.w1 * gv;
        }
      }
    }
  });
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  if (parts.size() > 4) throw ShapeError("concat_channels: at most 4 inputs supported");
  Shape o = parts[0].shape();
  o.c = 0;
  std::vector<int> offsets;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    if (s.n != o.n || s.h != o.h || s.w != o.w) {
      throw ShapeError(fmt::format("concat_channels: {} does not match {}", s.str(),
                                   parts[0].shape().str()));
    }
    offsets.push_back(o.c);
    o.c += s.c;
  }
  const std::size_t hw = o.plane();
  std::vector<double> out(o.numel());
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Shape& s = parts[k].shape();
    const double* src = parts[k].data().data();
    for (int n = 0; n < o.n; ++n) {
      std::copy_n(src + static_cast<std::size_t>(n) * s.c * hw, s.c * hw,
                  out.data() + (static_cast<std::size_t>(n) * o.c + offsets[k]) * hw);
    }
  }
  auto bw = [o, hw, offsets](detail::Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      double* gk = grad_of(self, k);
      if (gk == nullptr) continue;
      const int c = self.inputs[k]->shape.c;
      for (int n = 0; n < o.n; ++n) {
        const double* g = self.grad.data() + (static_cast<std::size_t>(n) * o.c + offsets[k]) * hw;
        double* dst = gk + static_cast<std::size_t>(n) * c * hw;
        for (std::size_t i = 0; i < c * hw; ++i) dst[i] += g[i];
      }
    }
  };
  const Tensor* p0 = &parts[0];
  const Tensor* p1 = parts.size() > 1 ? &parts[1] : nullptr;
  const Tensor* p2 = parts.size() > 2 ? &parts[2] : nullptr;
  const Tensor* p3 = parts.size() > 3 ? &parts[3] : nullptr;
  switch (parts.size()) {
    case 1:
      return make_result(o, std::move(out), {p0}, bw);
    case 2:
      return make_result(o, std::move(out), {p0, p1}, bw);
    case 3:
      return make_result(o, std::move(out), {p0, p1, p2}, bw);
    default:
      return make_result(o, std::move(out), {p0, p1, p2, p3}, bw);
  }
}

Tensor slice_channels(const Tensor& x, int begin, int count) {
  const Shape s = x.shape();
  if (begin < 0 || count < 1 || begin + count > s.c) {
    throw ShapeError(fmt::format("slice_channels: [{}, {}) out of range for {}", begin,
                                 begin + count, s.str()));
  }
  const Shape o{s.n, count, s.h, s.w};
  const std::size_t hw = s.plane();
  std::vector<double> out(o.numel());
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(x.data().data() + (static_cast<std::size_t>(n) * s.c + begin) * hw, count * hw,
                out.data() + static_cast<std::size_t>(n) * count * hw);
  }
  return make_result(o, std::move(out), {&x}, [s, begin, count, hw](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (gx == nullptr) return;
    for (int n = 0; n < s.n; ++n) {
      const double* g = self.grad.data() + static_cast<std::size_t>(n) * count * hw;
      double* dst = gx + (static_cast<std::size_t>(n) * s.c + begin) * hw;
      for (std::size_t i = 0; i < count * hw; ++i) dst[i] += g[i];
    }
  });
}

Tensor global_avg_pool(const Tensor& x) {
  const Shape s = x.shape();
  const std::size_t hw = s.plane();
  std::vector<double> out(static_cast<std::size_t>(s.n) * s.c);
  for (std::size_t k = 0; k < out.size(); ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += x.data()[k * hw + i];
    out[k] = acc / static_cast<double>(hw);
  }
  return make_result(Shape{s.n, s.c, 1, 1}, std::move(out), {&x}, [hw](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (gx == nullptr) return;
    for (std::size_t k = 0; k < self.grad.size(); ++k) {
      const double g = self.grad[k] / static_cast<double>(hw);
      for (std::size_t i = 0; i < hw; ++i) gx[k * hw + i] += g;
    }
  });
}

Tensor global_max_pool(const Tensor& x) {
  const Shape s = x.shape();
  const std::size_t hw = s.plane();
  std::vector<double> out(static_cast<std::size_t>(s.n) * s.c);
  std::vector<std::size_t> arg(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::size_t best = k * hw;
    for (std::size_t i = 1; i < hw; ++i) {
      if (x.data()[k * hw + i] > x.data()[best]) best = k * hw + i;
    }
    arg[k] = best;
    out[k] = x.data()[best];
  }
  return make_result(Shape{s.n, s.c, 1, 1}, std::move(out), {&x},
                     [arg = std::move(arg)](detail::Node& self) {
                       double* gx = grad_of(self, 0);
                       if (gx == nullptr) return;
                       for (std::size_t k = 0; k < arg.size(); ++k) gx[arg[k]] += self.grad[k];
                     });
}

Tensor channel_mean(const Tensor& x) {
  const Shape s = x.shape();
  const std::size_t hw = s.plane();
  std::vector<double> out(static_cast<std::size_t>(s.n) * hw, 0.0);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* src = x.data().data() + (static_cast<std::size_t>(n) * s.c + c) * hw;
      for (std::size_t p = 0; p < hw; ++p) out[n * hw + p] += src[p];
    }
    for (std::size_t p = 0; p < hw; ++p) out[n * hw + p] /= s.c;
  }
  return make_result(Shape{s.n, 1, s.h, s.w}, std::move(out), {&x}, [s, hw](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (gx == nullptr) return;
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        double* dst = gx + (static_cast<std::size_t>(n) * s.c + c) * hw;
        for (std::size_t p = 0; p < hw; ++p) dst[p] += self.grad[n * hw + p] / s.c;
      }
    }
  });
}

Tensor channel_max(const Tensor& x) {
  const Shape s = x.shape();
  const std::size_t hw = s.plane();
  std::vector<double> out(static_cast<std::size_t>(s.n) * hw);
  std::vector<std::size_t> arg(out.size());
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < hw; ++p) {
      std::size_t best = static_cast<std::size_t>(n) * s.c * hw + p;
      for (int c = 1; c < s.c; ++c) {
        const std::size_t cand = (static_cast<std::size_t>(n) * s.c + c) * hw + p;
        if (x.data()[cand] > x.data()[best]) best = cand;
      }
      arg[n * hw + p] = best;
      out[n * hw + p] = x.data()[best];
    }
  }
  return make_result(Shape{s.n, 1, s.h, s.w}, std::move(out), {&x},
                     [arg = std::move(arg)](detail::Node& self) {
                       double* gx = grad_of(self, 0);
                       if (gx == nullptr) return;
                       for (std::size_t k = 0; k < arg.size(); ++k) gx[arg[k]] += self.grad[k];
                     });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (const double v : x.data()) acc += v;
  return make_result(Shape{}, {acc}, {&x}, [](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (gx == nullptr) return;
    const std::size_t n = self.inputs[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError(fmt::format("mse_loss: prediction {} vs target {}", pred.shape().str(),
                                 target.shape().str()));
  }
  const std::size_t n = pred.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred.data()[i] - target.data()[i];
    acc += d * d;
  }
  return make_result(Shape{}, {acc / static_cast<double>(n)}, {&pred, &target},
                     [n](detail::Node& self) {
                       const double* p = value_of(self, 0);
                       const double* t = value_of(self, 1);
                       const double k = 2.0 * self.grad[0] / static_cast<double>(n);
                       double* gp = grad_of(self, 0);
                       double* gt = grad_of(self, 1);
                       for (std::size_t i = 0; i < n; ++i) {
                         const double d = k * (p[i] - t[i]);
                         if (gp) gp[i] += d;
                         if (gt) gt[i] -= d;
                       }
                     });
}

namespace {

// One window slot of one attention row: source row offset, column shift and valid x range.
struct WindowSlot {
  std::ptrdiff_t src_row = 0;
  int dx = 0;
  int x0 = 0;
  int x1 = 0;
  [[nodiscard]] bool valid() const { return x0 < x1; }
};

WindowSlot window_slot(const WindowAttentionSpec& spec, int head, int t, int y, const Shape& s) {
  const int half = spec.kernel / 2;
  const int dil = spec.dilations[head];
  const int ny = y + (t / spec.kernel - half) * dil;
  WindowSlot ws;
  if (ny < 0 || ny >= s.h) return ws;
  ws.dx = (t % spec.kernel - half) * dil;
  ws.src_row = static_cast<std::ptrdiff_t>(ny) * s.w;
  ws.x0 = std::max(0, -ws.dx);
  ws.x1 = std::min(s.w, s.w - ws.dx);
  return ws;
}

}  // namespace

Tensor dilated_window_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                const WindowAttentionSpec& spec, std::vector<double>* weights) {
  const Shape s = q.shape();
  if (k.shape() != s || v.shape() != s) {
    throw ShapeError(fmt::format("window attention: q {} k {} v {} must match", s.str(),
                                 k.shape().str(), v.shape().str()));
  }
  if (spec.heads < 1 || s.c % spec.heads != 0) {
    throw ConfigError(fmt::format(
        "window attention: {} channels not divisible by head_count {}", s.c, spec.heads));
  }
  if (static_cast<int>(spec.dilations.size()) != spec.heads) {
    throw ConfigError(fmt::format("window attention: {} dilations given for {} heads",
                                  spec.dilations.size(), spec.heads));
  }
  if (spec.kernel < 1 || spec.kernel % 2 == 0) {
    throw ConfigError("window attention: kernel must be odd and positive");
  }
  for (const int d : spec.dilations) {
    if (d < 1) throw ConfigError("window attention: dilations must be positive");
  }
  const int hd = s.c / spec.heads;
  const int slots = spec.kernel * spec.kernel;
  const std::size_t hw = s.plane();
  const double scl = 1.0 / std::sqrt(static_cast<double>(hd));
  const Shape as{s.n, spec.heads * slots, s.h, s.w};
  std::vector<double> attn(as.numel());
  std::vector<double> out(s.numel(), 0.0);
  const double* qv = q.data().data();
  const double* kv = k.data().data();
  const double* vv = v.data().data();
  std::vector<double> mx(s.w);
  std::vector<double> z(s.w);
  Eigen::ArrayXd scratch(s.w);

  for (int n = 0; n < s.n; ++n) {
    for (int head = 0; head < spec.heads; ++head) {
      const std::size_t cbase = (static_cast<std::size_t>(n) * s.c + head * hd) * hw;
      double* abase = attn.data() + (static_cast<std::size_t>(n) * spec.heads + head) * slots * hw;
      for (int y = 0; y < s.h; ++y) {
        const std::size_t row = static_cast<std::size_t>(y) * s.w;
        std::fill(mx.begin(), mx.end(), -std::numeric_limits<double>::infinity());
        for (int t = 0; t < slots; ++t) {
          const WindowSlot ws = window_slot(spec, head, t, y, s);
          double* a = abase + t * hw + row;
          if (!ws.valid()) continue;
          std::fill(a, a + s.w, 0.0);
          for (int c = 0; c < hd; ++c) {
            const double* qr = qv + cbase + c * hw + row;
            const double* kr = kv + cbase + c * hw + ws.src_row + ws.x0 + ws.dx;
            for (int x = ws.x0; x < ws.x1; ++x) a[x] += qr[x] * kr[x - ws.x0];
          }
          for (int x = ws.x0; x < ws.x1; ++x) {
            a[x] *= scl;
            mx[x] = std::max(mx[x], a[x]);
          }
        }
        std::fill(z.begin(), z.end(), 0.0);
        for (int t = 0; t < slots; ++t) {
          const WindowSlot ws = window_slot(spec, head, t, y, s);
          double* a = abase + t * hw + row;
          if (!ws.valid()) {
            std::fill(a, a + s.w, 0.0);
            continue;
          }
          exp_shifted(a + ws.x0, mx.data() + ws.x0, 0.0, ws.x1 - ws.x0, scratch);
          std::fill(a, a + ws.x0, 0.0);
          std::fill(a + ws.x1, a + s.w, 0.0);
          for (int x = ws.x0; x < ws.x1; ++x) z[x] += a[x];
        }
        for (int x = 0; x < s.w; ++x) z[x] = 1.0 / z[x];
        for (int t = 0; t < slots; ++t) {
          const WindowSlot ws = window_slot(spec, head, t, y, s);
          if (!ws.valid()) continue;
          double* a = abase + t * hw + row;
          for (int x = ws.x0; x < ws.x1; ++x) a[x] *= z[x];
          for (int c = 0; c < hd; ++c) {
            double* orow = out.data() + cbase + c * hw + row;
            const double* vr = vv + cbase + c * hw + ws.src_row + ws.x0 + ws.dx;
            for (int x = ws.x0; x < ws.x1; ++x) orow[x] += a[x] * vr[x - ws.x0];
          }
        }
      }
    }
  }
  if (weights != nullptr) *weights = attn;

  return make_result(s, std::move(out), {&q, &k, &v},
                     [s, spec, hd, slots, hw, scl, attn = std::move(attn)](detail::Node& self) {
                       const double* qv = value_of(self, 0);
                       const double* kv = value_of(self, 1);
                       const double* vv = value_of(self, 2);
                       double* gq = grad_of(self, 0);
                       double* gk = grad_of(self, 1);
                       double* gv = grad_of(self, 2);
                       const double* g = self.grad.data();
                       std::vector<double> da(static_cast<std::size_t>(slots) * s.w);
                       std::vector<double> dot(s.w);
                       for (int n = 0; n < s.n; ++n) {
                         for (int head = 0; head < spec.heads; ++head) {
                           const std::size_t cbase =
                               (static_cast<std::size_t>(n) * s.c + head * hd) * hw;
                           const double* abase =
                               attn.data() +
                               (static_cast<std::size_t>(n) * spec.heads + head) * slots * hw;
                           for (int y = 0; y < s.h; ++y) {
                             const std::size_t row = static_cast<std::size_t>(y) * s.w;
                             std::fill(dot.begin(), dot.end(), 0.0);
                             for (int t = 0; t < slots; ++t) {
                               const WindowSlot ws = window_slot(spec, head, t, y, s);
                               if (!ws.valid()) continue;
                               const double* a = abase + t * hw + row;
                               double* d = da.data() + static_cast<std::size_t>(t) * s.w;
                               std::fill(d, d + s.w, 0.0);
                               for (int c = 0; c < hd; ++c) {
                                 const double* gr = g + cbase + c * hw + row;
                                 const std::size_t src = cbase + c * hw + ws.src_row + ws.x0 + ws.dx;
                                 const double* vr = vv + src;
                                 for (int x = ws.x0; x < ws.x1; ++x) d[x] += gr[x] * vr[x - ws.x0];
                                 if (gv) {
                                   double* gvr = gv + src;
                                   for (int x = ws.x0; x < ws.x1; ++x) gvr[x - ws.x0] += a[x] * gr[x];
                                 }
                               }
                               for (int x = ws.x0; x < ws.x1; ++x) dot[x] += a[x] * d[x];
                             }
                             if (!gq && !gk) continue;
                             for (int t = 0; t < slots; ++t) {
                               const WindowSlot ws = window_slot(spec, head, t, y, s);
                               if (!ws.valid()) continue;
                               const double* a = abase + t * hw + row;
                               double* d = da.data() + static_cast<std::size_t>(t) * s.w;
                               for (int x = ws.x0; x < ws.x1; ++x) {
                                 d[x] = a[x] * (d[x] - dot[x]) * scl;
                               }
                               for (int c = 0; c < hd; ++c) {
                                 const std::size_t here = cbase + c * hw + row;
                                 const std::size_t src = cbase + c * hw + ws.src_row + ws.x0 + ws.dx;
                                 if (gq) {
                                   double* gqr = gq + here;
                                   const double* kr = kv + src;
                                   for (int x = ws.x0; x < ws.x1; ++x) gqr[x] += d[x] * kr[x - ws.x0];
                                 }
                                 if (gk) {
                                   double* gkr = gk + src;
                                   const double* qr = qv + here;
                                   for (int x = ws.x0; x < ws.x1; ++x) gkr[x - ws.x0] += d[x] * qr[x];
                                 }
                               }
                             }
                           }
                         }
                       }
                     });
}

Tensor position_attention(const Tensor& keys, const Tensor& queries, const Tensor& values,
                          std::vector<double>* weights) {
  const Shape s = keys.shape();
  if (queries.shape() != s || values.shape() != s) {
    throw ShapeError(fmt::format("position attention: {} {} {} must match", s.str(),
                                 queries.shape().str(), values.shape().str()));
  }
  const int C = s.c;
  const auto N = static_cast<Eigen::Index>(s.plane());
  std::vector<double> attn(static_cast<std::size_t>(s.n) * N * N);
  std::vector<double> out(s.numel());
  Eigen::ArrayXd scratch(N);
  for (int n = 0; n < s.n; ++n) {
    const std::size_t off = static_cast<std::size_t>(n) * C * N;
    CMapMat kb(keys.data().data() + off, C, N);
    CMapMat qz(queries.data().data() + off, C, N);
    CMapMat vd(values.data().data() + off, C, N);
    MapMat sm(attn.data() + static_cast<std::size_t>(n) * N * N, N, N);
    sm.noalias() = qz.transpose() * kb;  // row j: queries_j . keys_i
    for (Eigen::Index j = 0; j < N; ++j) {
      double* row = &sm(j, 0);
      const double mx = *std::max_element(row, row + N);
      exp_shifted(row, nullptr, mx, N, scratch);
      const double inv = 1.0 / plain_sum(row, N);
      for (Eigen::Index i = 0; i < N; ++i) row[i] *= inv;
    }
    MapMat(out.data() + off, C, N).noalias() = vd * sm.transpose();
  }
  if (weights != nullptr) *weights = attn;
  return make_result(s, std::move(out), {&keys, &queries, &values},
                     [s, C, N, attn = std::move(attn)](detail::Node& self) {
                       double* gk = grad_of(self, 0);
                       double* gq = grad_of(self, 1);
                       double* gv = grad_of(self, 2);
                       RowMat ds(N, N);
                       for (int n = 0; n < s.n; ++n) {
                         const std::size_t off = static_cast<std::size_t>(n) * C * N;
                         CMapMat kb(value_of(self, 0) + off, C, N);
                         CMapMat qz(value_of(self, 1) + off, C, N);
                         CMapMat vd(value_of(self, 2) + off, C, N);
                         CMapMat sm(attn.data() + static_cast<std::size_t>(n) * N * N, N, N);
                         CMapMat dout(self.grad.data() + off, C, N);
                         if (gv) MapMat(gv + off, C, N).noalias() += dout * sm;
                         if (!gk && !gq) continue;
                         ds.noalias() = dout.transpose() * vd;
                         for (Eigen::Index j = 0; j < N; ++j) {
                           double* dr = &ds(j, 0);
                           const double* sr = sm.data() + j * N;
                           const double dot = plain_dot(dr, sr, N);
                           for (Eigen::Index i = 0; i < N; ++i) dr[i] = sr[i] * (dr[i] - dot);
                         }
                         if (gq) MapMat(gq + off, C, N).noalias() += kb * ds.transpose();
                         if (gk) MapMat(gk + off, C, N).noalias() += qz * ds;
                       }
                     });
}

}  // namespace msca::ops
