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

// Minimal reverse-mode differentiation over flat double tensors.
//
// A Tape owns every intermediate value. Ops are free functions that compute
// their result eagerly and, when any input requires a gradient, record a
// closure that scatters the output gradient back into the inputs. Feature
// maps are CHW; images are HWC (interleaved) like gridtouch::Image.

#pragma once

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gridtouch/attributes.hpp"
#include "gridtouch/bilateral.hpp"
#include "gridtouch/image.hpp"

namespace gridtouch::ad {

using Shape = std::vector<int>;

Eigen::Index shape_size(const Shape& s);

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Eigen::ArrayXd& value() const;
  const Shape& shape() const;
  Eigen::Index size() const { return value().size(); }
  double scalar() const { return value()[0]; }
  bool requires_grad() const;
  /// Gradient after Tape::backward (zero-sized if never reached).
  const Eigen::ArrayXd& grad() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Eigen::ArrayXd& grad_out)>;

  Var constant(Eigen::ArrayXd value, Shape shape);
  Var variable(Eigen::ArrayXd value, Shape shape);

  /// Appends an op result. `backward` is dropped unless a parent needs grad.
  Var record(Eigen::ArrayXd value, Shape shape, std::initializer_list<Var> parents, Backward backward);
  Var record(Eigen::ArrayXd value, Shape shape, std::span<const Var> parents, Backward backward);

  /// Seeds d root / d root = 1 (root must be a scalar) and propagates.
  void backward(Var root);

  const Eigen::ArrayXd& value(int id) const { return nodes_[id].value; }
  const Shape& shape(int id) const { return nodes_[id].shape; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  const Eigen::ArrayXd& grad(int id) const { return nodes_[id].grad; }

  /// Gradient accumulator of a node; allocated on first use.
  Eigen::ArrayXd& grad_ref(int id);
  Eigen::ArrayXd& grad_ref(Var v) { return grad_ref(v.id()); }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Eigen::ArrayXd value;
    Eigen::ArrayXd grad;
    Shape shape;
    bool requires_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
};

// Elementwise and reductions.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double k);
Var mul(Var a, Var b);
Var relu(Var a);
/// Subgradient 0 at 0.
Var abs(Var a);
/// log(1 + e^x), evaluated stably.
Var softplus(Var a);
Var sum(Var a);
Var mean(Var a);
/// mean((a - b)^2).
Var mse(Var a, Var b);
/// Scalar entry i of a.
Var index(Var a, Eigen::Index i);

// Layout.
Var concat(std::span<const Var> parts, Shape shape);
Var narrow(Var a, Eigen::Index offset, Shape shape);
Var reshape(Var a, Shape shape);
/// [C, H, W] -> [H, W, C].
Var chw_to_hwc(Var a);

// Layers.
/// x [Cin, H, W], w [Cout, Cin, k, k], b [Cout]; zero padding.
Var conv2d(Var x, Var w, Var b, int stride, int pad);
/// x [C, H, W] + v[c] broadcast over each channel.
Var add_channel(Var x, Var v);
/// w [out, in], x [in], b [out].
Var linear(Var x, Var w, Var b);

/// Residual cross-attention from the pixels of x [C, H, W] (queries) to the
/// four condition tokens c_i e_i (keys / values):
///   x + softmax(Q K^T / sqrt(d)) V Wo,  Q = X Wq, K = diag(c) Wk, V = diag(c) Wv
/// with wq [C, d], wk [4, d], wv [4, d], wo [d, C].
Var cross_attention(Var x, const Eigen::Vector4d& c, Var wq, Var wk, Var wv, Var wo);

// Bilateral grid path. `img` is a constant HWC 3-channel image.
/// color [3,3], bias [1], channel_bias [3], slopes / thresholds [16,3] -> [H, W].
Var guidance(const Image& img, Var color, Var bias, Var channel_bias, Var slopes, Var thresholds);
/// grid: flat coefficients in the bilateral layout; guide [H, W] -> [H, W, 12].
Var slice(Var grid, const GridShape& shape, Var guide);
/// sliced [H, W, 12] applied to img -> [H, W, 3], clamped to [0, 1].
Var apply(Var sliced, const Image& img);

/// Attribute score of an HWC 3-channel tensor.
Var score(Var img, int width, int height, Attribute a, const ScoreOptions& opts);

/// HWC tensor value as an Image.
Image to_image(Var v, int width, int height);
/// Image <-> CHW arrays.
Eigen::ArrayXd image_to_chw(const Image& img);
Image chw_to_image(const Eigen::ArrayXd& chw, int channels, int width, int height);

}  // namespace gridtouch::ad
