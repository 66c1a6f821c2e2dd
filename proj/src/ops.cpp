// SPDX-License-Identifier: Apache-2.0
#include "siamban/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace siamban::ops {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Var make_node(Tensor value, bool requires_grad, std::vector<Var> inputs) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  if (requires_grad) n->inputs = std::move(inputs);
  return n;
}

void require_rank3(const Tensor& t, const char* what) {
  if (t.rank() != 3) throw std::invalid_argument(std::string(what) + " expects a (C,H,W) tensor, got " + t.shape_string());
}

struct ConvGeometry {
  int channels, in_h, in_w, kh, kw, out_h, out_w;
  Conv2dOptions opt;
  bool pointwise() const { return kh == 1 && kw == 1 && opt.stride == 1 && opt.padding == 0; }
  int rows() const { return channels * kh * kw; }
  int cols() const { return out_h * out_w; }
};

void im2col(const float* x, const ConvGeometry& g, float* col) {
  const int n = g.cols();
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        float* row = col + static_cast<std::size_t>((c * g.kh + ky) * g.kw + kx) * n;
        const int dy = ky * g.opt.dilation - g.opt.padding;
        const int dx = kx * g.opt.dilation - g.opt.padding;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.opt.stride + dy;
          float* dst = row + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, 0.0f);
            continue;
          }
          const float* src = x + (static_cast<std::size_t>(c) * g.in_h + iy) * g.in_w;
          if (g.opt.stride == 1) {
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int ix = ox + dx;
              dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : 0.0f;
            }
          } else {
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int ix = ox * g.opt.stride + dx;
              dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, const ConvGeometry& g, float* dx_out) {
  const int n = g.cols();
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        const float* row = col + static_cast<std::size_t>((c * g.kh + ky) * g.kw + kx) * n;
        const int dy = ky * g.opt.dilation - g.opt.padding;
        const int dx = kx * g.opt.dilation - g.opt.padding;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.opt.stride + dy;
          if (iy < 0 || iy >= g.in_h) continue;
          const float* src = row + static_cast<std::size_t>(oy) * g.out_w;
          float* dst = dx_out + (static_cast<std::size_t>(c) * g.in_h + iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.opt.stride + dx;
            if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

int conv_output_size(int in, int kernel, const Conv2dOptions& opt) {
  return (in + 2 * opt.padding - opt.dilation * (kernel - 1) - 1) / opt.stride + 1;
}

Var conv2d(Tape& tape, const Var& x, const Var& weight, const Var& bias, const Conv2dOptions& opt) {
  const Tensor& in = x->value;
  const Tensor& w = weight->value;
  require_rank3(in, "conv2d");
  if (w.rank() != 4 || w.dim(1) != in.dim(0)) {
    throw std::invalid_argument("conv2d weight " + w.shape_string() + " incompatible with input " + in.shape_string());
  }
  ConvGeometry g{in.dim(0), in.dim(1), in.dim(2), w.dim(2), w.dim(3), 0, 0, opt};
  g.out_h = conv_output_size(g.in_h, g.kh, opt);
  g.out_w = conv_output_size(g.in_w, g.kw, opt);
  if (g.out_h < 1 || g.out_w < 1) throw std::invalid_argument("conv2d output would be empty for " + in.shape_string());
  const int out_c = w.dim(0);

  std::vector<float> col;
  const float* col_ptr = in.data();
  if (!g.pointwise()) {
    col.resize(static_cast<std::size_t>(g.rows()) * g.cols());
    im2col(in.data(), g, col.data());
    col_ptr = col.data();
  }

  Tensor out({out_c, g.out_h, g.out_w});
  MapMat om(out.data(), out_c, g.cols());
  om.noalias() = ConstMapMat(w.data(), out_c, g.rows()) * ConstMapMat(col_ptr, g.rows(), g.cols());
  if (bias) {
    for (int o = 0; o < out_c; ++o) om.row(o).array() += bias->value[static_cast<std::size_t>(o)];
  }

  const bool rg = tape.wants_grad({&x, &weight, &bias});
  Var node = make_node(std::move(out), rg, {x, weight, bias});
  if (rg) {
    // Keep the unfolded input only when the weight gradient needs it.
    if (!weight->requires_grad) col.clear();
    node->backward = [g, out_c, col = std::move(col)](Node& self) {
      const Var& xv = self.inputs[0];
      const Var& wv = self.inputs[1];
      const Var& bv = self.inputs[2];
      ConstMapMat dout(self.grad.data(), out_c, g.cols());
      if (wv->requires_grad) {
        const float* cp = g.pointwise() ? xv->value.data() : col.data();
        MapMat dw(wv->grad_buffer().data(), out_c, g.rows());
        dw.noalias() += dout * ConstMapMat(cp, g.rows(), g.cols()).transpose();
      }
      if (bv && bv->requires_grad) {
        Tensor& db = bv->grad_buffer();
        // Fixed summation order; Eigen's vectorized sum depends on buffer alignment.
        const float* gp = self.grad.data();
        for (int o = 0; o < out_c; ++o) {
          double acc = 0.0;
          for (Eigen::Index q = 0; q < g.cols(); ++q) acc += gp[o * g.cols() + q];
          db[static_cast<std::size_t>(o)] += static_cast<float>(acc);
        }
      }
      if (xv->requires_grad) {
        ConstMapMat wm(wv->value.data(), out_c, g.rows());
        if (g.pointwise()) {
          MapMat dx(xv->grad_buffer().data(), g.rows(), g.cols());
          dx.noalias() += wm.transpose() * dout;
        } else {
          RowMat dcol = wm.transpose() * dout;
          col2im_add(dcol.data(), g, xv->grad_buffer().data());
        }
      }
    };
    tape.record(node);
  }
  return node;
}

Var relu(Tape& tape, const Var& x) {
  Tensor out = x->value;
  for (float& v : out.values()) v = v > 0.0f ? v : 0.0f;
  const bool rg = tape.wants_grad({&x});
  Var node = make_node(std::move(out), rg, {x});
  if (rg) {
    node->backward = [](Node& self) {
      Tensor& dx = self.inputs[0]->grad_buffer();
      for (std::size_t k = 0; k < dx.size(); ++k) {
        if (self.value[k] > 0.0f) dx[k] += self.grad[k];
      }
    };
    tape.record(node);
  }
  return node;
}

Var exp(Tape& tape, const Var& x) {
  Tensor out = x->value;
  for (float& v : out.values()) v = std::exp(v);
  const bool rg = tape.wants_grad({&x});
  Var node = make_node(std::move(out), rg, {x});
  if (rg) {
    node->backward = [](Node& self) {
      Tensor& dx = self.inputs[0]->grad_buffer();
      for (std::size_t k = 0; k < dx.size(); ++k) dx[k] += self.grad[k] * self.value[k];
    };
    tape.record(node);
  }
  return node;
}

Var add(Tape& tape, const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value)) {
    throw std::invalid_argument("add: shape mismatch " + a->value.shape_string() + " vs " + b->value.shape_string());
  }
  Tensor out = a->value;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += b->value[k];
  const bool rg = tape.wants_grad({&a, &b});
  Var node = make_node(std::move(out), rg, {a, b});
  if (rg) {
    node->backward = [](Node& self) {
      for (int s = 0; s < 2; ++s) {
        if (!self.inputs[s]->requires_grad) continue;
        Tensor& d = self.inputs[s]->grad_buffer();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] += self.grad[k];
      }
    };
    tape.record(node);
  }
  return node;
}

Var group_norm(Tape& tape, const Var& x, const Var& gamma, const Var& beta, int groups, float eps) {
  const Tensor& in = x->value;
  require_rank3(in, "group_norm");
  const int c = in.dim(0);
  if (groups < 1 || c % groups != 0) throw std::invalid_argument("group_norm: channels not divisible by groups");
  const int cpg = c / groups;
  const std::size_t plane = static_cast<std::size_t>(in.dim(1)) * in.dim(2);
  const std::size_t n = plane * cpg;

  Tensor xhat(in.shape());
  std::vector<float> inv_std(static_cast<std::size_t>(groups));
  for (int g = 0; g < groups; ++g) {
    const float* src = in.data() + g * n;
    double mean = 0.0;
    for (std::size_t k = 0; k < n; ++k) mean += src[k];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t k = 0; k < n; ++k) var += (src[k] - mean) * (src[k] - mean);
    var /= static_cast<double>(n);
    const float is = static_cast<float>(1.0 / std::sqrt(var + eps));
    inv_std[static_cast<std::size_t>(g)] = is;
    float* dst = xhat.data() + g * n;
    for (std::size_t k = 0; k < n; ++k) dst[k] = (src[k] - static_cast<float>(mean)) * is;
  }
  Tensor out(in.shape());
  for (int ch = 0; ch < c; ++ch) {
    const float s = gamma->value[static_cast<std::size_t>(ch)];
    const float b = beta->value[static_cast<std::size_t>(ch)];
    const float* src = xhat.data() + ch * plane;
    float* dst = out.data() + ch * plane;
    for (std::size_t k = 0; k < plane; ++k) dst[k] = src[k] * s + b;
  }

  const bool rg = tape.wants_grad({&x, &gamma, &beta});
  Var node = make_node(std::move(out), rg, {x, gamma, beta});
  if (rg) {
    node->backward = [xhat = std::move(xhat), inv_std = std::move(inv_std), groups, cpg, plane, n](Node& self) {
      const Var& xv = self.inputs[0];
      const Var& gv = self.inputs[1];
      const Var& bv = self.inputs[2];
      const int c = groups * cpg;
      if (gv->requires_grad || bv->requires_grad) {
        for (int ch = 0; ch < c; ++ch) {
          const float* dy = self.grad.data() + ch * plane;
          const float* xh = xhat.data() + ch * plane;
          double sg = 0.0, sb = 0.0;
          for (std::size_t k = 0; k < plane; ++k) {
            sg += dy[k] * xh[k];
            sb += dy[k];
          }
          if (gv->requires_grad) gv->grad_buffer()[static_cast<std::size_t>(ch)] += static_cast<float>(sg);
          if (bv->requires_grad) bv->grad_buffer()[static_cast<std::size_t>(ch)] += static_cast<float>(sb);
        }
      }
      if (!xv->requires_grad) return;
      Tensor& dx = xv->grad_buffer();
      std::vector<float> dxhat(n);
      for (int g = 0; g < groups; ++g) {
        double sum_d = 0.0, sum_dx = 0.0;
        for (int cc = 0; cc < cpg; ++cc) {
          const int ch = g * cpg + cc;
          const float s = gv->value[static_cast<std::size_t>(ch)];
          const float* dy = self.grad.data() + ch * plane;
          const float* xh = xhat.data() + ch * plane;
          float* dh = dxhat.data() + cc * plane;
          for (std::size_t k = 0; k < plane; ++k) {
            dh[k] = dy[k] * s;
            sum_d += dh[k];
            sum_dx += dh[k] * xh[k];
          }
        }
        const float is = inv_std[static_cast<std::size_t>(g)];
        const float mean_d = static_cast<float>(sum_d / static_cast<double>(n));
        const float mean_dx = static_cast<float>(sum_dx / static_cast<double>(n));
        const float* xh = xhat.data() + g * n;
        float* out = dx.data() + g * n;
        for (std::size_t k = 0; k < n; ++k) out[k] += is * (dxhat[k] - mean_d - xh[k] * mean_dx);
      }
    };
    tape.record(node);
  }
  return node;
}

Var frozen_batch_norm(Tape& tape, const Var& x, const Var& gamma, const Var& beta, const Tensor& running_mean,
                      const Tensor& running_var, float eps) {
  const Tensor& in = x->value;
  require_rank3(in, "frozen_batch_norm");
  const int c = in.dim(0);
  const std::size_t plane = static_cast<std::size_t>(in.dim(1)) * in.dim(2);
  std::vector<float> scale(static_cast<std::size_t>(c));
  Tensor out(in.shape());
  for (int ch = 0; ch < c; ++ch) {
    const auto k = static_cast<std::size_t>(ch);
    const float is = 1.0f / std::sqrt(running_var[k] + eps);
    scale[k] = gamma->value[k] * is;
    const float shift = beta->value[k] - running_mean[k] * scale[k];
    const float* src = in.data() + ch * plane;
    float* dst = out.data() + ch * plane;
    for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] * scale[k] + shift;
  }
  const bool rg = tape.wants_grad({&x, &gamma, &beta});
  Var node = make_node(std::move(out), rg, {x, gamma, beta});
  if (rg) {
    std::vector<float> inv(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch) inv[static_cast<std::size_t>(ch)] = 1.0f / std::sqrt(running_var[static_cast<std::size_t>(ch)] + eps);
    node->backward = [scale = std::move(scale), inv = std::move(inv), mean = running_mean, c, plane](Node& self) {
      const Var& xv = self.inputs[0];
      const Var& gv = self.inputs[1];
      const Var& bv = self.inputs[2];
      for (int ch = 0; ch < c; ++ch) {
        const auto k = static_cast<std::size_t>(ch);
        const float* dy = self.grad.data() + ch * plane;
        if (gv->requires_grad || bv->requires_grad) {
          const float* src = xv->value.data() + ch * plane;
          double sg = 0.0, sb = 0.0;
          for (std::size_t p = 0; p < plane; ++p) {
            sg += dy[p] * (src[p] - mean[k]) * inv[k];
            sb += dy[p];
          }
          if (gv->requires_grad) gv->grad_buffer()[k] += static_cast<float>(sg);
          if (bv->requires_grad) bv->grad_buffer()[k] += static_cast<float>(sb);
        }
        if (xv->requires_grad) {
          float* dx = xv->grad_buffer().data() + ch * plane;
          for (std::size_t p = 0; p < plane; ++p) dx[p] += dy[p] * scale[k];
        }
      }
    };
    tape.record(node);
  }
  return node;
}

Var max_pool2d(Tape& tape, const Var& x, int kernel, int stride, int padding) {
  const Tensor& in = x->value;
  require_rank3(in, "max_pool2d");
  const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
  const Conv2dOptions opt{stride, padding, 1};
  const int oh = conv_output_size(h, kernel, opt);
  const int ow = conv_output_size(w, kernel, opt);
  Tensor out({c, oh, ow});
  std::vector<int> arg(out.size());
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        int best_idx = -1;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= w) continue;
            const int idx = (ch * h + iy) * w + ix;
            if (in[static_cast<std::size_t>(idx)] > best) {
              best = in[static_cast<std::size_t>(idx)];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (static_cast<std::size_t>(ch) * oh + oy) * ow + ox;
        out[o] = best;
        arg[o] = best_idx;
      }
    }
  }
  const bool rg = tape.wants_grad({&x});
  Var node = make_node(std::move(out), rg, {x});
  if (rg) {
    node->backward = [arg = std::move(arg)](Node& self) {
      Tensor& dx = self.inputs[0]->grad_buffer();
      for (std::size_t o = 0; o < arg.size(); ++o) dx[static_cast<std::size_t>(arg[o])] += self.grad[o];
    };
    tape.record(node);
  }
  return node;
}

Var center_crop(Tape& tape, const Var& x, int size) {
  const Tensor& in = x->value;
  require_rank3(in, "center_crop");
  const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
  if (size > h || size > w) throw std::invalid_argument("center_crop larger than input " + in.shape_string());
  const int oy = (h - size) / 2;
  const int ox = (w - size) / 2;
  Tensor out({c, size, size});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < size; ++y) {
      for (int xx = 0; xx < size; ++xx) out.at(ch, y, xx) = in.at(ch, y + oy, xx + ox);
    }
  }
  const bool rg = tape.wants_grad({&x});
  Var node = make_node(std::move(out), rg, {x});
  if (rg) {
    node->backward = [oy, ox, size](Node& self) {
      Tensor& dx = self.inputs[0]->grad_buffer();
      const int c = self.value.dim(0);
      for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < size; ++y) {
          for (int xx = 0; xx < size; ++xx) dx.at(ch, y + oy, xx + ox) += self.grad.at(ch, y, xx);
        }
      }
    };
    tape.record(node);
  }
  return node;
}

namespace {

void check_xcorr_shapes(const Tensor& s, const Tensor& k) {
  require_rank3(s, "depthwise_xcorr search");
  require_rank3(k, "depthwise_xcorr kernel");
  if (s.dim(0) != k.dim(0)) {
    throw std::invalid_argument("depthwise_xcorr channel mismatch: " + s.shape_string() + " vs " + k.shape_string());
  }
  if (k.dim(1) > s.dim(1) || k.dim(2) > s.dim(2)) {
    throw std::invalid_argument("depthwise_xcorr kernel larger than search");
  }
}

}  // namespace

Tensor depthwise_xcorr(const Tensor& search, const Tensor& kernel) {
  check_xcorr_shapes(search, kernel);
  const int c = search.dim(0), sh = search.dim(1), sw = search.dim(2);
  const int kh = kernel.dim(1), kw = kernel.dim(2);
  const int oh = sh - kh + 1, ow = sw - kw + 1;
  Tensor out({c, oh, ow});
  for (int ch = 0; ch < c; ++ch) {
    for (int u = 0; u < kh; ++u) {
      for (int v = 0; v < kw; ++v) {
        const float k = kernel.at(ch, u, v);
        for (int y = 0; y < oh; ++y) {
          const float* src = &search.at(ch, y + u, v);
          float* dst = &out.at(ch, y, 0);
          for (int x = 0; x < ow; ++x) dst[x] += k * src[x];
        }
      }
    }
  }
  return out;
}

Var depthwise_xcorr(Tape& tape, const Var& search, const Var& kernel) {
  Tensor out = depthwise_xcorr(search->value, kernel->value);
  const bool rg = tape.wants_grad({&search, &kernel});
  Var node = make_node(std::move(out), rg, {search, kernel});
  if (rg) {
    node->backward = [](Node& self) {
      const Var& sv = self.inputs[0];
      const Var& kv = self.inputs[1];
      const Tensor& s = sv->value;
      const Tensor& k = kv->value;
      const int c = s.dim(0), kh = k.dim(1), kw = k.dim(2);
      const int oh = self.value.dim(1), ow = self.value.dim(2);
      Tensor* ds = sv->requires_grad ? &sv->grad_buffer() : nullptr;
      Tensor* dk = kv->requires_grad ? &kv->grad_buffer() : nullptr;
      for (int ch = 0; ch < c; ++ch) {
        for (int u = 0; u < kh; ++u) {
          for (int v = 0; v < kw; ++v) {
            const float kval = k.at(ch, u, v);
            float acc = 0.0f;
            for (int y = 0; y < oh; ++y) {
              const float* g = &self.grad.at(ch, y, 0);
              const float* src = &s.at(ch, y + u, v);
              if (dk) {
                for (int x = 0; x < ow; ++x) acc += g[x] * src[x];
              }
              if (ds) {
                float* d = &ds->at(ch, y + u, v);
                for (int x = 0; x < ow; ++x) d[x] += g[x] * kval;
              }
            }
            if (dk) dk->at(ch, u, v) += acc;
          }
        }
      }
    };
    tape.record(node);
  }
  return node;
}

std::vector<float> softmax(const float* logits, int n) {
  std::vector<float> w(static_cast<std::size_t>(n));
  const float m = *std::max_element(logits, logits + n);
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += std::exp(static_cast<double>(logits[i] - m));
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = static_cast<float>(std::exp(static_cast<double>(logits[i] - m)) / z);
  return w;
}

Var softmax_weighted_sum(Tape& tape, const std::vector<Var>& inputs, const Var& logits) {
  if (inputs.empty()) throw std::invalid_argument("softmax_weighted_sum needs at least one input");
  const int n = static_cast<int>(inputs.size());
  if (static_cast<int>(logits->value.size()) != n) {
    throw std::invalid_argument("softmax_weighted_sum: one logit per input required");
  }
  for (const Var& v : inputs) {
    if (!v->value.same_shape(inputs[0]->value)) throw std::invalid_argument("softmax_weighted_sum: shape mismatch");
  }
  const std::vector<float> w = softmax(logits->value.data(), n);
  Tensor out(inputs[0]->value.shape());
  for (int l = 0; l < n; ++l) {
    const Tensor& x = inputs[static_cast<std::size_t>(l)]->value;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += w[static_cast<std::size_t>(l)] * x[k];
  }
  bool rg = tape.wants_grad({&logits});
  for (const Var& v : inputs) rg = rg || tape.wants_grad({&v});
  std::vector<Var> deps = inputs;
  deps.push_back(logits);
  Var node = make_node(std::move(out), rg, std::move(deps));
  if (rg) {
    node->backward = [w, n](Node& self) {
      std::vector<double> dot(static_cast<std::size_t>(n), 0.0);
      for (int l = 0; l < n; ++l) {
        const Var& in = self.inputs[static_cast<std::size_t>(l)];
        const Tensor& x = in->value;
        double acc = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) acc += static_cast<double>(x[k]) * self.grad[k];
        dot[static_cast<std::size_t>(l)] = acc;
        if (in->requires_grad) {
          Tensor& dx = in->grad_buffer();
          for (std::size_t k = 0; k < dx.size(); ++k) dx[k] += w[static_cast<std::size_t>(l)] * self.grad[k];
        }
      }
      const Var& lv = self.inputs.back();
      if (lv->requires_grad) {
        double mixed = 0.0;
        for (int l = 0; l < n; ++l) mixed += w[static_cast<std::size_t>(l)] * dot[static_cast<std::size_t>(l)];
        Tensor& dl = lv->grad_buffer();
        for (int l = 0; l < n; ++l) {
          const auto i = static_cast<std::size_t>(l);
          dl[i] += static_cast<float>(w[i] * (dot[i] - mixed));
        }
      }
    };
    tape.record(node);
  }
  return node;
}

}  // namespace siamban::ops
