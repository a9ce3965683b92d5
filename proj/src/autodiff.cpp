// Copyright 2026 The GridTouch Authors
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

#include "gridtouch/autodiff.hpp"

#include <cmath>
#include <memory>
#include <numeric>

#include <Eigen/Dense>

#include "gridtouch/error.hpp"

namespace gridtouch::ad {

using Eigen::ArrayXd;
using Eigen::Index;
using ColMatrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Index shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), Index{1}, [](Index a, int b) { return a * b; });
}

const ArrayXd& Var::value() const { return tape_->value(id_); }
const Shape& Var::shape() const { return tape_->shape(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }
const ArrayXd& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(ArrayXd value, Shape shape) {
  if (shape_size(shape) != value.size()) throw ShapeError("constant: shape does not match value size");
  nodes_.push_back({std::move(value), ArrayXd(), std::move(shape), false, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::variable(ArrayXd value, Shape shape) {
  if (shape_size(shape) != value.size()) throw ShapeError("variable: shape does not match value size");
  nodes_.push_back({std::move(value), ArrayXd(), std::move(shape), true, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(ArrayXd value, Shape shape, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::move(shape), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Tape::record(ArrayXd value, Shape shape, std::span<const Var> parents, Backward backward) {
  const bool needs = std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p.requires_grad(); });
  nodes_.push_back({std::move(value), ArrayXd(), std::move(shape), needs, needs ? std::move(backward) : nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

ArrayXd& Tape::grad_ref(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad = ArrayXd::Zero(n.value.size());
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape() != this || root.size() != 1) throw ShapeError("backward needs a scalar root on this tape");
  if (!root.requires_grad()) return;
  grad_ref(root.id())[0] += 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, n.grad);
  }
}

namespace {

void accumulate(Tape& t, Var v, const ArrayXd& g) {
  if (v.requires_grad()) t.grad_ref(v) += g;
}

void check_same(Var a, Var b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": size mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
}

}  // namespace

Var add(Var a, Var b) {
  check_same(a, b, "add");
  return a.tape()->record(a.value() + b.value(), a.shape(), {a, b}, [a, b](Tape& t, const ArrayXd& g) {
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var sub(Var a, Var b) {
  check_same(a, b, "sub");
  return a.tape()->record(a.value() - b.value(), a.shape(), {a, b}, [a, b](Tape& t, const ArrayXd& g) {
    accumulate(t, a, g);
    if (b.requires_grad()) t.grad_ref(b) -= g;
  });
}

Var scale(Var a, double k) {
  return a.tape()->record(a.value() * k, a.shape(), {a},
                          [a, k](Tape& t, const ArrayXd& g) { t.grad_ref(a) += k * g; });
}

Var mul(Var a, Var b) {
  check_same(a, b, "mul");
  return a.tape()->record(a.value() * b.value(), a.shape(), {a, b}, [a, b](Tape& t, const ArrayXd& g) {
    if (a.requires_grad()) t.grad_ref(a) += g * b.value();
    if (b.requires_grad()) t.grad_ref(b) += g * a.value();
  });
}

Var relu(Var a) {
  return a.tape()->record(a.value().max(0.0), a.shape(), {a}, [a](Tape& t, const ArrayXd& g) {
    t.grad_ref(a) += (a.value() > 0.0).cast<double>() * g;
  });
}

Var abs(Var a) {
  return a.tape()->record(a.value().abs(), a.shape(), {a}, [a](Tape& t, const ArrayXd& g) {
    t.grad_ref(a) += a.value().unaryExpr([](double v) { return double((v > 0.0) - (v < 0.0)); }) * g;
  });
}

Var softplus(Var a) {
  ArrayXd out = a.value().max(0.0) + (-a.value().abs()).exp().log1p();
  return a.tape()->record(std::move(out), a.shape(), {a}, [a](Tape& t, const ArrayXd& g) {
    const ArrayXd sig = a.value().unaryExpr([](double v) {
      return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    });
    t.grad_ref(a) += sig * g;
  });
}

Var sum(Var a) {
  ArrayXd out(1);
  out[0] = a.value().sum();
  return a.tape()->record(std::move(out), {1}, {a},
                          [a](Tape& t, const ArrayXd& g) { t.grad_ref(a) += g[0]; });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var mse(Var a, Var b) {
  check_same(a, b, "mse");
  const double n = static_cast<double>(a.size());
  ArrayXd out(1);
  out[0] = (a.value() - b.value()).square().sum() / n;
  return a.tape()->record(std::move(out), {1}, {a, b}, [a, b, n](Tape& t, const ArrayXd& g) {
    const ArrayXd d = (2.0 * g[0] / n) * (a.value() - b.value());
    accumulate(t, a, d);
    if (b.requires_grad()) t.grad_ref(b) -= d;
  });
}

Var index(Var a, Index i) {
  ArrayXd out(1);
  out[0] = a.value()[i];
  return a.tape()->record(std::move(out), {1}, {a}, [a, i](Tape& t, const ArrayXd& g) { t.grad_ref(a)[i] += g[0]; });
}

Var concat(std::span<const Var> parts, Shape shape) {
  Index total = 0;
  for (const Var& p : parts) total += p.size();
  if (total != shape_size(shape)) throw ShapeError("concat: shape does not match total size");
  ArrayXd out(total);
  Index at = 0;
  for (const Var& p : parts) {
    out.segment(at, p.size()) = p.value();
    at += p.size();
  }
  std::vector<Var> kept(parts.begin(), parts.end());
  return parts.front().tape()->record(std::move(out), std::move(shape), parts,
                                      [kept](Tape& t, const ArrayXd& g) {
                                        Index at = 0;
                                        for (const Var& p : kept) {
                                          if (p.requires_grad()) t.grad_ref(p) += g.segment(at, p.size());
                                          at += p.size();
                                        }
                                      });
}

Var narrow(Var a, Index offset, Shape shape) {
  const Index n = shape_size(shape);
  if (offset < 0 || offset + n > a.size()) throw ShapeError("narrow: range out of bounds");
  return a.tape()->record(a.value().segment(offset, n), std::move(shape), {a},
                          [a, offset, n](Tape& t, const ArrayXd& g) { t.grad_ref(a).segment(offset, n) += g; });
}

Var reshape(Var a, Shape shape) {
  if (shape_size(shape) != a.size()) throw ShapeError("reshape: size mismatch");
  return a.tape()->record(a.value(), std::move(shape), {a},
                          [a](Tape& t, const ArrayXd& g) { t.grad_ref(a) += g; });
}

Var chw_to_hwc(Var a) {
  const Shape& s = a.shape();
  if (s.size() != 3) throw ShapeError("chw_to_hwc expects a rank-3 tensor");
  const int c = s[0], hw = s[1] * s[2];
  // CHW memory is a column-major (HW x C) matrix; HWC is its transpose.
  Eigen::Map<const ColMatrix> in(a.value().data(), hw, c);
  ArrayXd out(a.size());
  Eigen::Map<ColMatrix>(out.data(), c, hw) = in.transpose();
  return a.tape()->record(std::move(out), {s[1], s[2], c}, {a}, [a, c, hw](Tape& t, const ArrayXd& g) {
    Eigen::Map<const ColMatrix> gm(g.data(), c, hw);
    Eigen::Map<ColMatrix>(t.grad_ref(a).data(), hw, c) += gm.transpose();
  });
}

namespace {

struct ConvGeometry {
  int cin, h, w, cout, k, stride, pad, ho, wo;
  Index positions() const { return static_cast<Index>(ho) * wo; }
  Index taps() const { return static_cast<Index>(cin) * k * k; }
};

// Column-major (positions x taps) patch matrix.
ColMatrix im2col(const double* x, const ConvGeometry& g) {
  ColMatrix col(g.positions(), g.taps());
  for (int ci = 0; ci < g.cin; ++ci) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        double* dst = col.col((ci * g.k + ky) * g.k + kx).data();
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[oy * g.wo + ox] =
                (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? x[(ci * g.h + iy) * g.w + ix] : 0.0;
          }
        }
      }
    }
  }
  return col;
}

void col2im(const ColMatrix& col, const ConvGeometry& g, double* dx) {
  for (int ci = 0; ci < g.cin; ++ci) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const double* src = col.col((ci * g.k + ky) * g.k + kx).data();
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dx[(ci * g.h + iy) * g.w + ix] += src[oy * g.wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 4 || ws[1] != xs[0] || ws[2] != ws[3] || b.size() != ws[0]) {
    throw ShapeError("conv2d: incompatible input / weight / bias shapes");
  }
  ConvGeometry g{xs[0], xs[1], xs[2], ws[0], ws[2], stride, pad, 0, 0};
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;
  if (g.ho <= 0 || g.wo <= 0) throw ShapeError("conv2d: empty output");

  auto col = std::make_shared<ColMatrix>(im2col(x.value().data(), g));
  Eigen::Map<const ColMatrix> wt(w.value().data(), g.taps(), g.cout);
  ArrayXd out(g.positions() * g.cout);
  Eigen::Map<ColMatrix> om(out.data(), g.positions(), g.cout);
  om.noalias() = *col * wt;
  om.rowwise() += b.value().matrix().transpose();

  const bool needs = x.requires_grad() || w.requires_grad() || b.requires_grad();
  if (!needs) col.reset();
  return x.tape()->record(std::move(out), {g.cout, g.ho, g.wo}, {x, w, b},
                          [x, w, b, g, col](Tape& t, const ArrayXd& grad) {
                            Eigen::Map<const ColMatrix> gm(grad.data(), g.positions(), g.cout);
                            if (w.requires_grad()) {
                              Eigen::Map<ColMatrix>(t.grad_ref(w).data(), g.taps(), g.cout).noalias() +=
                                  col->transpose() * gm;
                            }
                            if (b.requires_grad()) t.grad_ref(b) += gm.colwise().sum().transpose().array();
                            if (x.requires_grad()) {
                              Eigen::Map<const ColMatrix> wt(w.value().data(), g.taps(), g.cout);
                              const ColMatrix dcol = gm * wt.transpose();
                              col2im(dcol, g, t.grad_ref(x).data());
                            }
                          });
}

Var add_channel(Var x, Var v) {
  const Shape& s = x.shape();
  if (s.size() != 3 || v.size() != s[0]) throw ShapeError("add_channel: bias length must equal channels");
  const Index hw = static_cast<Index>(s[1]) * s[2];
  ArrayXd out = x.value();
  Eigen::Map<ColMatrix>(out.data(), hw, s[0]).rowwise() += v.value().matrix().transpose();
  return x.tape()->record(std::move(out), s, {x, v}, [x, v, hw](Tape& t, const ArrayXd& g) {
    accumulate(t, x, g);
    if (v.requires_grad()) {
      t.grad_ref(v) += Eigen::Map<const ColMatrix>(g.data(), hw, v.size()).colwise().sum().transpose().array();
    }
  });
}

Var linear(Var x, Var w, Var b) {
  const Shape& ws = w.shape();
  if (ws.size() != 2 || ws[1] != x.size() || b.size() != ws[0]) throw ShapeError("linear: shape mismatch");
  Eigen::Map<const RowMatrix> wm(w.value().data(), ws[0], ws[1]);
  ArrayXd out = (wm * x.value().matrix()).array() + b.value();
  return x.tape()->record(std::move(out), {ws[0]}, {x, w, b}, [x, w, b](Tape& t, const ArrayXd& g) {
    const Shape& ws = w.shape();
    Eigen::Map<const RowMatrix> wm(w.value().data(), ws[0], ws[1]);
    if (w.requires_grad()) {
      Eigen::Map<RowMatrix>(t.grad_ref(w).data(), ws[0], ws[1]) += g.matrix() * x.value().matrix().transpose();
    }
    accumulate(t, b, g);
    if (x.requires_grad()) t.grad_ref(x) += (wm.transpose() * g.matrix()).array();
  });
}

Var cross_attention(Var x, const Eigen::Vector4d& c, Var wq, Var wk, Var wv, Var wo) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw ShapeError("cross_attention expects a [C, H, W] input");
  const int ch = s[0];
  const Index n = static_cast<Index>(s[1]) * s[2];
  if (wq.shape().size() != 2 || wq.shape()[0] != ch) throw ShapeError("cross_attention: wq must be [C, d]");
  const int d = wq.shape()[1];
  if (wk.shape() != Shape{4, d} || wv.shape() != Shape{4, d} || wo.shape() != Shape{d, ch}) {
    throw ShapeError("cross_attention: wk, wv must be [4, d] and wo [d, C]");
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  struct Cache {
    ColMatrix q, k, v, a, o;
  };
  auto cache = std::make_shared<Cache>();
  Eigen::Map<const ColMatrix> phi(x.value().data(), n, ch);
  Eigen::Map<const RowMatrix> mq(wq.value().data(), ch, d);
  Eigen::Map<const RowMatrix> mk(wk.value().data(), 4, d);
  Eigen::Map<const RowMatrix> mv(wv.value().data(), 4, d);
  Eigen::Map<const RowMatrix> mo(wo.value().data(), d, ch);
  const Eigen::Matrix4d tokens = c.asDiagonal();

  cache->q = phi * mq;
  cache->k = tokens * mk;
  cache->v = tokens * mv;
  ColMatrix scores = cache->q * cache->k.transpose() * inv_sqrt_d;
  const Eigen::VectorXd row_max = scores.rowwise().maxCoeff();
  scores = (scores.colwise() - row_max).array().exp().matrix();
  cache->a = scores.array().colwise() / scores.rowwise().sum().array();
  cache->o = cache->a * cache->v;

  ArrayXd out = x.value();
  Eigen::Map<ColMatrix>(out.data(), n, ch).noalias() += cache->o * mo;

  return x.tape()->record(
      std::move(out), s, {x, wq, wk, wv, wo},
      [x, wq, wk, wv, wo, c, n, ch, d, inv_sqrt_d, cache](Tape& t, const ArrayXd& g) {
        Eigen::Map<const ColMatrix> dout(g.data(), n, ch);
        Eigen::Map<const ColMatrix> phi(x.value().data(), n, ch);
        Eigen::Map<const RowMatrix> mq(wq.value().data(), ch, d);
        Eigen::Map<const RowMatrix> mo(wo.value().data(), d, ch);
        const Eigen::Matrix4d tokens = c.asDiagonal();

        if (wo.requires_grad()) Eigen::Map<RowMatrix>(t.grad_ref(wo).data(), d, ch) += cache->o.transpose() * dout;
        const ColMatrix d_o = dout * mo.transpose();
        const ColMatrix d_a = d_o * cache->v.transpose();
        const ColMatrix d_v = cache->a.transpose() * d_o;
        const Eigen::VectorXd inner = (d_a.array() * cache->a.array()).rowwise().sum();
        const ColMatrix d_s = (cache->a.array() * (d_a.colwise() - inner).array()).matrix();
        const ColMatrix d_q = d_s * cache->k * inv_sqrt_d;
        const ColMatrix d_k = d_s.transpose() * cache->q * inv_sqrt_d;

        if (wv.requires_grad()) Eigen::Map<RowMatrix>(t.grad_ref(wv).data(), 4, d) += tokens * d_v;
        if (wk.requires_grad()) Eigen::Map<RowMatrix>(t.grad_ref(wk).data(), 4, d) += tokens * d_k;
        if (wq.requires_grad()) Eigen::Map<RowMatrix>(t.grad_ref(wq).data(), ch, d) += phi.transpose() * d_q;
        if (x.requires_grad()) {
          Eigen::Map<ColMatrix> dx(t.grad_ref(x).data(), n, ch);
          dx += dout;
          dx.noalias() += d_q * mq.transpose();
        }
      });
}

Var guidance(const Image& img, Var color, Var bias, Var channel_bias, Var slopes, Var thresholds) {
  if (img.channels != 3) throw ShapeError("guidance expects a 3-channel image");
  constexpr int kKnots = GuidanceParams::kKnots;
  if (color.size() != 9 || bias.size() != 1 || channel_bias.size() != 3 || slopes.size() != 3 * kKnots ||
      thresholds.size() != 3 * kKnots) {
    throw ShapeError("guidance: parameter shapes");
  }
  using Knots = Eigen::Matrix<double, kKnots, 3, Eigen::RowMajor>;
  auto params = [&]() {
    GuidanceParams p;
    p.color = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(color.value().data());
    p.bias = bias.value()[0];
    p.channel_bias = channel_bias.value().matrix();
    p.slopes = Eigen::Map<const Knots>(slopes.value().data());
    p.thresholds = Eigen::Map<const Knots>(thresholds.value().data());
    return p;
  };
  const GuidanceParams p = params();
  const std::size_t n = img.pixel_count();
  auto raw = std::make_shared<ArrayXd>(n);
  ArrayXd out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d rgb(img.data[3 * i], img.data[3 * i + 1], img.data[3 * i + 2]);
    (*raw)[i] = guidance_value(rgb, p);
    out[i] = std::clamp((*raw)[i], 0.0, 1.0);
  }
  const Image* src = &img;
  return color.tape()->record(
      std::move(out), {img.height, img.width}, {color, bias, channel_bias, slopes, thresholds},
      [src, raw, p, color, bias, channel_bias, slopes, thresholds](Tape& t, const ArrayXd& g) {
        Eigen::Matrix3d d_color = Eigen::Matrix3d::Zero();
        double d_bias = 0.0;
        Eigen::Vector3d d_cb = Eigen::Vector3d::Zero();
        Knots d_slopes = Knots::Zero(), d_thr = Knots::Zero();
        for (std::size_t i = 0; i < src->pixel_count(); ++i) {
          if (g[i] == 0.0 || (*raw)[i] < 0.0 || (*raw)[i] > 1.0) continue;
          const Eigen::Vector3d rgb(src->data[3 * i], src->data[3 * i + 1], src->data[3 * i + 2]);
          const Eigen::Vector3d v = p.color * rgb + p.channel_bias;
          d_bias += g[i];
          Eigen::Vector3d dv = Eigen::Vector3d::Zero();
          for (int ch = 0; ch < 3; ++ch) {
            for (int k = 0; k < kKnots; ++k) {
              const double excess = v[ch] - p.thresholds(k, ch);
              if (excess <= 0.0) continue;
              d_slopes(k, ch) += g[i] * excess;
              d_thr(k, ch) -= g[i] * p.slopes(k, ch);
              dv[ch] += g[i] * p.slopes(k, ch);
            }
          }
          d_color += dv * rgb.transpose();
          d_cb += dv;
        }
        using Row3 = Eigen::Matrix<double, 3, 3, Eigen::RowMajor>;
        if (color.requires_grad()) Eigen::Map<Row3>(t.grad_ref(color).data()) += d_color;
        if (bias.requires_grad()) t.grad_ref(bias)[0] += d_bias;
        if (channel_bias.requires_grad()) t.grad_ref(channel_bias) += d_cb.array();
        if (slopes.requires_grad()) Eigen::Map<Knots>(t.grad_ref(slopes).data()) += d_slopes;
        if (thresholds.requires_grad()) Eigen::Map<Knots>(t.grad_ref(thresholds).data()) += d_thr;
      });
}

Var slice(Var grid, const GridShape& shape, Var guide) {
  if (static_cast<std::size_t>(grid.size()) != shape.coefficient_count()) {
    throw ShapeError("slice: grid coefficient count mismatch");
  }
  if (guide.shape().size() != 2) throw ShapeError("slice: guide must be [H, W]");
  const int h = guide.shape()[0], w = guide.shape()[1];
  ArrayXd out(static_cast<Index>(h) * w * kAffineCoefficients);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const SliceStencil st = slice_stencil(shape, x, y, w, h, guide.value()[y * w + x]);
      slice_at(grid.value().data(), shape, st, out.data() + (static_cast<Index>(y) * w + x) * kAffineCoefficients);
    }
  }
  return grid.tape()->record(std::move(out), {h, w, kAffineCoefficients}, {grid, guide},
                             [grid, guide, shape, h, w](Tape& t, const ArrayXd& g) {
    double* dgrid = grid.requires_grad() ? t.grad_ref(grid).data() : nullptr;
    double* dguide = guide.requires_grad() ? t.grad_ref(guide).data() : nullptr;
    const double* cg = grid.value().data();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Index p = static_cast<Index>(y) * w + x;
        const double* gp = g.data() + p * kAffineCoefficients;
        const SliceStencil st = slice_stencil(shape, x, y, w, h, guide.value()[p]);
        const int xs[2] = {st.x0, st.x1}, ys[2] = {st.y0, st.y1}, zs[2] = {st.z0, st.z1};
        const double wx[2] = {1.0 - st.fx, st.fx}, wy[2] = {1.0 - st.fy, st.fy}, wz[2] = {1.0 - st.fz, st.fz};
        for (int iy = 0; iy < 2; ++iy) {
          for (int ix = 0; ix < 2; ++ix) {
            const double wxy = wx[ix] * wy[iy];
            for (int iz = 0; iz < 2; ++iz) {
              const std::size_t off = grid_offset(shape, xs[ix], ys[iy], zs[iz]);
              if (dgrid) {
                const double wgt = wxy * wz[iz];
                for (int k = 0; k < kAffineCoefficients; ++k) dgrid[off + k] += wgt * gp[k];
              }
              if (dguide && st.z_free) {
                // d/dG of the depth lerp: (cell(z1) - cell(z0)) * depth.
                const double sign = iz == 0 ? -1.0 : 1.0;
                double acc = 0.0;
                for (int k = 0; k < kAffineCoefficients; ++k) acc += gp[k] * cg[off + k];
                dguide[p] += sign * wxy * acc * shape.depth;
              }
            }
          }
        }
      }
    }
  });
}

Var apply(Var sliced, const Image& img) {
  if (img.channels != 3 || sliced.shape() != Shape{img.height, img.width, kAffineCoefficients}) {
    throw ShapeError("apply: sliced matrices do not match the image");
  }
  const std::size_t n = img.pixel_count();
  ArrayXd out(static_cast<Index>(3 * n));
  auto inside = std::make_shared<std::vector<bool>>(3 * n);
  const double* m = sliced.value().data();
  for (std::size_t p = 0; p < n; ++p) {
    const double* rgb = img.data.data() + 3 * p;
    for (int r = 0; r < 3; ++r) {
      const double* row = m + p * kAffineCoefficients + 4 * r;
      const double v = row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2] + row[3];
      (*inside)[3 * p + r] = v >= 0.0 && v <= 1.0;
      out[3 * p + r] = std::clamp(v, 0.0, 1.0);
    }
  }
  const Image* src = &img;
  return sliced.tape()->record(std::move(out), {img.height, img.width, 3}, {sliced},
                               [sliced, src, inside](Tape& t, const ArrayXd& g) {
    double* dm = t.grad_ref(sliced).data();
    for (std::size_t p = 0; p < src->pixel_count(); ++p) {
      const double* rgb = src->data.data() + 3 * p;
      for (int r = 0; r < 3; ++r) {
        if (!(*inside)[3 * p + r]) continue;
        const double gv = g[3 * p + r];
        double* row = dm + p * kAffineCoefficients + 4 * r;
        row[0] += gv * rgb[0];
        row[1] += gv * rgb[1];
        row[2] += gv * rgb[2];
        row[3] += gv;
      }
    }
  });
}

Image to_image(Var v, int width, int height) {
  if (v.size() != static_cast<Index>(width) * height * 3) throw ShapeError("to_image: size mismatch");
  Image img(width, height, 3);
  Eigen::Map<ArrayXd>(img.data.data(), v.size()) = v.value();
  return img;
}

Var score(Var img, int width, int height, Attribute a, const ScoreOptions& opts) {
  const Image im = to_image(img, width, height);
  ArrayXd out(1);
  switch (a) {
    case Attribute::Colorfulness: out[0] = colorfulness(im); break;
    case Attribute::Contrast: out[0] = contrast(im, opts.contrast); break;
    case Attribute::Cct: out[0] = cct(im, opts.cct, opts.linearize); break;
    case Attribute::Brightness: out[0] = brightness(im); break;
  }
  return img.tape()->record(std::move(out), {1}, {img}, [img, width, height, a, opts](Tape& t, const ArrayXd& g) {
    const Image grad = score_gradient(to_image(img, width, height), a, opts);
    t.grad_ref(img) += g[0] * Eigen::Map<const ArrayXd>(grad.data.data(), img.size());
  });
}

ArrayXd image_to_chw(const Image& img) {
  const Index hw = static_cast<Index>(img.pixel_count());
  ArrayXd out(hw * img.channels);
  Eigen::Map<ColMatrix>(out.data(), hw, img.channels) =
      Eigen::Map<const ColMatrix>(img.data.data(), img.channels, hw).transpose();
  return out;
}

Image chw_to_image(const ArrayXd& chw, int channels, int width, int height) {
  const Index hw = static_cast<Index>(width) * height;
  if (chw.size() != hw * channels) throw ShapeError("chw_to_image: size mismatch");
  Image img(width, height, channels);
  Eigen::Map<ColMatrix>(img.data.data(), channels, hw) = Eigen::Map<const ColMatrix>(chw.data(), hw, channels).transpose();
  return img;
}

}  // namespace gridtouch::ad
