// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "siamban/autograd.hpp"

namespace siamban::ops {

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

int conv_output_size(int in, int kernel, const Conv2dOptions& opt);

/// x: (C, H, W); weight: (O, C, kh, kw); bias: (O) or null.
Var conv2d(Tape& tape, const Var& x, const Var& weight, const Var& bias, const Conv2dOptions& opt = {});

Var relu(Tape& tape, const Var& x);
Var exp(Tape& tape, const Var& x);
Var add(Tape& tape, const Var& a, const Var& b);

/// Per-sample group normalization with a per-channel affine.
Var group_norm(Tape& tape, const Var& x, const Var& gamma, const Var& beta, int groups, float eps = 1e-5f);

/// Batch normalization with fixed statistics: (x - mean) / sqrt(var + eps) * gamma + beta.
Var frozen_batch_norm(Tape& tape, const Var& x, const Var& gamma, const Var& beta, const Tensor& running_mean,
                      const Tensor& running_var, float eps = 1e-5f);

Var max_pool2d(Tape& tape, const Var& x, int kernel, int stride, int padding);

/// Central size x size spatial window; offset (H - size) / 2.
Var center_crop(Tape& tape, const Var& x, int size);

/// Per-channel valid cross-correlation of search (C, S, S) with kernel
/// (C, K, K); output (C, S-K+1, S-K+1).
Var depthwise_xcorr(Tape& tape, const Var& search, const Var& kernel);
Tensor depthwise_xcorr(const Tensor& search, const Tensor& kernel);

/// sum_l softmax(logits)_l * inputs[l]; logits has one entry per input.
Var softmax_weighted_sum(Tape& tape, const std::vector<Var>& inputs, const Var& logits);

std::vector<float> softmax(const float* logits, int n);

}  // namespace siamban::ops
