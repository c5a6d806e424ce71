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

#pragma once

#include <span>
#include <vector>

#include "msca/tensor.hpp"

namespace msca::ops {

/// Stride-1 2-D convolution geometry. Output extent per axis is
/// `in + 2 * padding - dilation * (kernel - 1)`.
struct Conv2dSpec {
  int padding = 0;
  int dilation = 1;
  int groups = 1;
};

/// x: (N, Cin, H, W); weight: (Cout, Cin / groups, kh, kw); bias: (1, Cout, 1, 1)
/// or an undefined tensor.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dSpec spec);

// Element-wise arithmetic with size-1 broadcasting on any axis.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

Tensor gelu(const Tensor& x);  // exact (erf) form
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

/// Normalizes each pixel across channels; weight/bias are (1, C, 1, 1).
Tensor channel_layer_norm(const Tensor& x, const Tensor& weight, const Tensor& bias,
                          double eps = 1e-5);

/// Normalizes each (sample, group) over its channels and all pixels.
Tensor group_norm(const Tensor& x, int groups, const Tensor& weight, const Tensor& bias,
                  double eps = 1e-5);

Tensor max_pool2x2(const Tensor& x);
/// Bilinear x2 upsampling with half-pixel centers (edges clamped).
Tensor upsample_bilinear2x(const Tensor& x);

Tensor concat_channels(std::span<const Tensor> parts);
Tensor slice_channels(const Tensor& x, int begin, int count);

Tensor global_avg_pool(const Tensor& x);  // -> (N, C, 1, 1)
Tensor global_max_pool(const Tensor& x);  // -> (N, C, 1, 1)
Tensor channel_mean(const Tensor& x);     // -> (N, 1, H, W)
Tensor channel_max(const Tensor& x);      // -> (N, 1, H, W)

Tensor sum(const Tensor& x);  // -> scalar
Tensor mean(const Tensor& x);
/// Mean squared error over every element; shapes must match exactly.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

/// Multi-head sliding-window attention. Head i uses channels
/// [i*d, (i+1)*d) of q/k/v (d = C / heads) and attends over a kernel x kernel
/// window sampled at `dilations[i]`. Window slots that fall outside the image
/// are excluded from the softmax.
struct WindowAttentionSpec {
  int heads = 3;
  int kernel = 3;
  std::vector<int> dilations{1, 2, 3};
};

/// If `weights` is non-null it receives the softmax weights laid out as
/// [n][head][slot][y][x] (slot = row-major position in the window; excluded
/// slots hold 0).
Tensor dilated_window_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                const WindowAttentionSpec& spec,
                                std::vector<double>* weights = nullptr);

/// Position attention: s[j][i] = softmax_i(keys_i . queries_j) over all N = H*W
/// positions; returns out_j = sum_i s[j][i] * values_i. If `weights` is
/// non-null it receives s laid out as [n][j][i].
Tensor position_attention(const Tensor& keys, const Tensor& queries, const Tensor& values,
                          std::vector<double>* weights = nullptr);

}  // namespace msca::ops
