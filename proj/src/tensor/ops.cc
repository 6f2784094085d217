// Copyright 2026 The maskdet Authors. All Rights Reserved.
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

#include "maskdet/tensor/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>

#include "maskdet/errors.h"

namespace maskdet::ops {
namespace {

template <class T>
using StoragePtr = std::shared_ptr<TensorStorage<T>>;

template <class T>
BasicTensor<T> record(Shape shape, std::vector<T> values, std::vector<StoragePtr<T>> inputs,
                      std::function<void(const std::vector<T>&)> apply) {
  BasicTensor<T> out(std::move(shape), std::move(values));
  const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const auto& s) { return s->requires_grad; });
  if (needs) {
    auto fn = std::make_shared<GradFn<T>>();
    fn->inputs = std::move(inputs);
    fn->apply = std::move(apply);
    out.storage()->requires_grad = true;
    out.storage()->grad_fn = std::move(fn);
  }
  return out;
}

template <class T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + " input, got " +
                         shape_str(t.shape()));
  }
}

// C[M,N] += A[M,K] * B[K,N]
template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T{0}) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = a[p * m + i];
      if (av == T{0}) continue;
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T
template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T s{0};
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * n + j] += s;
    }
  }
}

struct ConvGeometry {
  std::size_t n, c, h, w;     // input
  std::size_t o, kh, kw;      // kernel
  std::size_t oh, ow;         // output
  Conv2dOptions opt;

  std::size_t patch() const { return c * kh * kw; }
  std::size_t positions() const { return oh * ow; }
  bool is_pointwise() const {
    return kh == 1 && kw == 1 && opt.stride_h == 1 && opt.stride_w == 1 && opt.pad_h == 0 && opt.pad_w == 0;
  }
};

// col[(ci*kh + i)*kw + j][oy*ow + ox]
template <class T>
void im2col(const ConvGeometry& g, const T* image, T* col) {
  const std::size_t p_count = g.positions();
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = col + ((ci * g.kh + i) * g.kw + j) * p_count;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long y = static_cast<long>(oy * g.opt.stride_h + i) - static_cast<long>(g.opt.pad_h);
          T* dst = row + oy * g.ow;
          if (y < 0 || y >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.ow, T{0});
            continue;
          }
          const T* src = image + (ci * g.h + static_cast<std::size_t>(y)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long x = static_cast<long>(ox * g.opt.stride_w + j) - static_cast<long>(g.opt.pad_w);
            dst[ox] = (x < 0 || x >= static_cast<long>(g.w)) ? T{0} : src[x];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const ConvGeometry& g, const T* col, T* image) {
  const std::size_t p_count = g.positions();
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((ci * g.kh + i) * g.kw + j) * p_count;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long y = static_cast<long>(oy * g.opt.stride_h + i) - static_cast<long>(g.opt.pad_h);
          if (y < 0 || y >= static_cast<long>(g.h)) continue;
          T* dst = image + (ci * g.h + static_cast<std::size_t>(y)) * g.w;
          const T* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long x = static_cast<long>(ox * g.opt.stride_w + j) - static_cast<long>(g.opt.pad_w);
            if (x >= 0 && x < static_cast<long>(g.w)) dst[x] += src[ox];
          }
        }
      }
    }
  }
}

template <class T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
}

}  // namespace

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const std::optional<BasicTensor<T>>& bias, const Conv2dOptions& options) {
  require_rank(input, 4, "conv2d");
  require_rank(weight, 4, "conv2d weight");
  if (options.stride_h == 0 || options.stride_w == 0) throw ParameterError("conv2d: stride must be positive");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0), weight.dim(2),
                 weight.dim(3), 0, 0, options};
  if (weight.dim(1) != g.c) {
    throw DimensionError("conv2d: input " + shape_str(input.shape()) + " and weight " + shape_str(weight.shape()) +
                         " disagree on channel count");
  }
  if (g.h + 2 * options.pad_h < g.kh || g.w + 2 * options.pad_w < g.kw) {
    throw DimensionError("conv2d: kernel " + shape_str(weight.shape()) + " larger than padded input " +
                         shape_str(input.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.o)) {
    throw DimensionError("conv2d: bias " + shape_str(bias->shape()) + " does not match weight " +
                         shape_str(weight.shape()));
  }
  g.oh = (g.h + 2 * options.pad_h - g.kh) / options.stride_h + 1;
  g.ow = (g.w + 2 * options.pad_w - g.kw) / options.stride_w + 1;

  const std::size_t patch = g.patch();
  const std::size_t positions = g.positions();
  const std::size_t in_plane = g.c * g.h * g.w;
  const std::size_t out_plane = g.o * positions;
  std::vector<T> out(g.n * out_plane, T{0});
  std::vector<T> col(g.is_pointwise() ? 0 : patch * positions);
  const T* x = input.data().data();
  const T* wt = weight.data().data();
  for (std::size_t n = 0; n < g.n; ++n) {
    T* y = out.data() + n * out_plane;
    if (bias) {
      for (std::size_t oc = 0; oc < g.o; ++oc) std::fill(y + oc * positions, y + (oc + 1) * positions, (*bias)[oc]);
    }
    const T* cols = x + n * in_plane;
    if (!g.is_pointwise()) {
      im2col(g, cols, col.data());
      cols = col.data();
    }
    gemm_nn(g.o, positions, patch, wt, cols, y);
  }

  std::vector<StoragePtr<T>> inputs{input.storage(), weight.storage()};
  if (bias) inputs.push_back(bias->storage());
  auto in_s = input.storage();
  auto w_s = weight.storage();
  StoragePtr<T> b_s = bias ? bias->storage() : nullptr;
  return record<T>({g.n, g.o, g.oh, g.ow}, std::move(out), std::move(inputs),
                   [g, in_s, w_s, b_s](const std::vector<T>& dy) {
                     const std::size_t patch = g.patch();
                     const std::size_t positions = g.positions();
                     const std::size_t in_plane = g.c * g.h * g.w;
                     const std::size_t out_plane = g.o * positions;
                     std::vector<T> col(g.is_pointwise() ? 0 : patch * positions);
                     std::vector<T> col_t(patch * positions);
                     std::vector<T> dcol(patch * positions);
                     for (std::size_t n = 0; n < g.n; ++n) {
                       const T* dyn = dy.data() + n * out_plane;
                       if (b_s && b_s->requires_grad) {
                         auto& gb = b_s->grad_buffer();
                         for (std::size_t oc = 0; oc < g.o; ++oc) {
                           T s{0};
                           for (std::size_t p = 0; p < positions; ++p) s += dyn[oc * positions + p];
                           gb[oc] += s;
                         }
                       }
                       if (w_s->requires_grad) {
                         const T* cols = in_s->data.data() + n * in_plane;
                         if (!g.is_pointwise()) {
                           im2col(g, cols, col.data());
                           cols = col.data();
                         }
                         transpose(patch, positions, cols, col_t.data());
                         gemm_nn(g.o, patch, positions, dyn, col_t.data(), w_s->grad_buffer().data());
                       }
                       if (in_s->requires_grad) {
                         T* dx = in_s->grad_buffer().data() + n * in_plane;
                         if (g.is_pointwise()) {
                           gemm_tn(patch, positions, g.o, w_s->data.data(), dyn, dx);
                         } else {
                           std::fill(dcol.begin(), dcol.end(), T{0});
                           gemm_tn(patch, positions, g.o, w_s->data.data(), dyn, dcol.data());
                           col2im_add(g, dcol.data(), dx);
                         }
                       }
                     }
                   });
}

template <class T>
BasicTensor<T> pool2d(const BasicTensor<T>& input, PoolKind kind, std::size_t k, std::size_t stride,
                      std::size_t padding) {
  require_rank(input, 4, "pool2d");
  if (k == 0 || stride == 0) throw ParameterError("pool2d: window and stride must be positive");
  if (padding >= k) throw ParameterError("pool2d: padding must be smaller than the window");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (k > h + 2 * padding || k > w + 2 * padding) {
    throw DimensionError("pool2d: window " + std::to_string(k) + " exceeds input " + shape_str(input.shape()));
  }
  const std::size_t oh = (h + 2 * padding - k) / stride + 1;
  const std::size_t ow = (w + 2 * padding - k) / stride + 1;
  const std::size_t planes = n * c;
  std::vector<T> out(planes * oh * ow);
  // For max: flat source index per output. For avg: divisor per output cell.
  auto argmax = std::make_shared<std::vector<std::size_t>>(kind == PoolKind::kMax ? out.size() : 0);
  const T* x = input.data().data();

  auto window = [h, w, k, stride, padding](std::size_t oy, std::size_t ox, std::size_t& y0, std::size_t& y1, std::size_t& x0,
                    std::size_t& x1) {
    const long ys = static_cast<long>(oy * stride) - static_cast<long>(padding);
    const long xs = static_cast<long>(ox * stride) - static_cast<long>(padding);
    y0 = static_cast<std::size_t>(std::max(0L, ys));
    x0 = static_cast<std::size_t>(std::max(0L, xs));
    y1 = static_cast<std::size_t>(std::min(static_cast<long>(h), ys + static_cast<long>(k)));
    x1 = static_cast<std::size_t>(std::min(static_cast<long>(w), xs + static_cast<long>(k)));
  };

  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* src = x + pl * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t y0, y1, x0, x1;
        window(oy, ox, y0, y1, x0, x1);
        const std::size_t o = (pl * oh + oy) * ow + ox;
        if (kind == PoolKind::kMax) {
          std::size_t best = y0 * w + x0;
          T best_v = src[best];
          for (std::size_t yy = y0; yy < y1; ++yy) {
            for (std::size_t xx = x0; xx < x1; ++xx) {
              if (src[yy * w + xx] > best_v) {
                best_v = src[yy * w + xx];
                best = yy * w + xx;
              }
            }
          }
          out[o] = best_v;
          (*argmax)[o] = pl * h * w + best;
        } else {
          T s{0};
          for (std::size_t yy = y0; yy < y1; ++yy) {
            for (std::size_t xx = x0; xx < x1; ++xx) s += src[yy * w + xx];
          }
          out[o] = s / static_cast<T>((y1 - y0) * (x1 - x0));
        }
      }
    }
  }

  auto in_s = input.storage();
  return record<T>({n, c, oh, ow}, std::move(out), {in_s},
                   [=](const std::vector<T>& dy) {
                     auto& dx = in_s->grad_buffer();
                     if (kind == PoolKind::kMax) {
                       for (std::size_t o = 0; o < dy.size(); ++o) dx[(*argmax)[o]] += dy[o];
                       return;
                     }
                     for (std::size_t pl = 0; pl < planes; ++pl) {
                       T* dst = dx.data() + pl * h * w;
                       for (std::size_t oy = 0; oy < oh; ++oy) {
                         for (std::size_t ox = 0; ox < ow; ++ox) {
                           std::size_t y0, y1, x0, x1;
                           window(oy, ox, y0, y1, x0, x1);
                           const T g = dy[(pl * oh + oy) * ow + ox] / static_cast<T>((y1 - y0) * (x1 - x0));
                           for (std::size_t yy = y0; yy < y1; ++yy) {
                             for (std::size_t xx = x0; xx < x1; ++xx) dst[yy * w + xx] += g;
                           }
                         }
                       }
                     }
                   });
}

template <class T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input) {
  require_rank(input, 4, "global_avg_pool");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  std::vector<T> out(n * c);
  const T* x = input.data().data();
  for (std::size_t pl = 0; pl < n * c; ++pl) {
    T s{0};
    for (std::size_t i = 0; i < hw; ++i) s += x[pl * hw + i];
    out[pl] = s / static_cast<T>(hw);
  }
  auto in_s = input.storage();
  return record<T>({n, c}, std::move(out), {in_s}, [in_s, hw](const std::vector<T>& dy) {
    auto& dx = in_s->grad_buffer();
    for (std::size_t pl = 0; pl < dy.size(); ++pl) {
      const T g = dy[pl] / static_cast<T>(hw);
      for (std::size_t i = 0; i < hw; ++i) dx[pl * hw + i] += g;
    }
  });
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  std::vector<T> out(input.values());
  for (T& v : out) v = v > T{0} ? v : T{0};
  auto in_s = input.storage();
  return record<T>(input.shape(), std::move(out), {in_s}, [in_s](const std::vector<T>& dy) {
    auto& dx = in_s->grad_buffer();
    for (std::size_t i = 0; i < dy.size(); ++i) {
      if (in_s->data[i] > T{0}) dx[i] += dy[i];
    }
  });
}

template <class T>
BasicTensor<T> batch_norm2d(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                            BatchNormState& state, Mode mode, double momentum, double epsilon) {
  require_rank(input, 4, "batch_norm2d");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (gamma.numel() != c || beta.numel() != c || state.running_mean.size() != c ||
      state.running_var.size() != c) {
    throw DimensionError("batch_norm2d: parameters do not match " + std::to_string(c) + " channels of " +
                         shape_str(input.shape()));
  }
  const std::size_t count = n * hw;
  const bool train = mode == Mode::kTrain;
  if (train && count < 2) {
    throw InputError("batch_norm2d: degenerate batch, train mode needs at least 2 values per channel, got " +
                     shape_str(input.shape()));
  }

  const T* x = input.data().data();
  std::vector<T> out(input.numel());
  auto xhat = std::make_shared<std::vector<T>>(input.numel());
  auto inv_std = std::make_shared<std::vector<T>>(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean, var;
    if (train) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = x + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      mean = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = x + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - mean) * (p[i] - mean);
      }
      var = ss / static_cast<double>(count);
      const double unbiased = ss / static_cast<double>(count - 1);
      state.running_mean[ch] = (1.0 - momentum) * state.running_mean[ch] + momentum * mean;
      state.running_var[ch] = (1.0 - momentum) * state.running_var[ch] + momentum * unbiased;
    } else {
      mean = state.running_mean[ch];
      var = state.running_var[ch];
    }
    const double istd = 1.0 / std::sqrt(var + epsilon);
    (*inv_std)[ch] = static_cast<T>(istd);
    const T g = gamma[ch], bt = beta[ch];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T xh = static_cast<T>((x[off + i] - mean) * istd);
        (*xhat)[off + i] = xh;
        out[off + i] = g * xh + bt;
      }
    }
  }

  auto in_s = input.storage();
  auto g_s = gamma.storage();
  auto b_s = beta.storage();
  return record<T>(input.shape(), std::move(out), {in_s, g_s, b_s},
                   [=](const std::vector<T>& dy) {
                     for (std::size_t ch = 0; ch < c; ++ch) {
                       T sum_dy{0}, sum_dy_xhat{0};
                       for (std::size_t b = 0; b < n; ++b) {
                         const std::size_t off = (b * c + ch) * hw;
                         for (std::size_t i = 0; i < hw; ++i) {
                           sum_dy += dy[off + i];
                           sum_dy_xhat += dy[off + i] * (*xhat)[off + i];
                         }
                       }
                       if (g_s->requires_grad) g_s->grad_buffer()[ch] += sum_dy_xhat;
                       if (b_s->requires_grad) b_s->grad_buffer()[ch] += sum_dy;
                       if (!in_s->requires_grad) continue;
                       auto& dx = in_s->grad_buffer();
                       const T scale = g_s->data[ch] * (*inv_std)[ch];
                       const T m = static_cast<T>(count);
                       for (std::size_t b = 0; b < n; ++b) {
                         const std::size_t off = (b * c + ch) * hw;
                         for (std::size_t i = 0; i < hw; ++i) {
                           if (train) {
                             dx[off + i] += scale * (dy[off + i] - sum_dy / m - (*xhat)[off + i] * sum_dy_xhat / m);
                           } else {
                             dx[off + i] += scale * dy[off + i];
                           }
                         }
                       }
                     }
                   });
}

template <class T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  require_rank(input, 2, "linear");
  require_rank(weight, 2, "linear weight");
  const std::size_t n = input.dim(0), f = input.dim(1), m = weight.dim(1);
  if (weight.dim(0) != f) {
    throw DimensionError("linear: input " + shape_str(input.shape()) + " and weight " + shape_str(weight.shape()) +
                         " inner dimensions differ");
  }
  if (bias.numel() != m) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
  }
  std::vector<T> out(n * m);
  for (std::size_t i = 0; i < n; ++i) std::copy(bias.data().begin(), bias.data().end(), out.begin() + i * m);
  gemm_nn(n, m, f, input.data().data(), weight.data().data(), out.data());

  auto in_s = input.storage();
  auto w_s = weight.storage();
  auto b_s = bias.storage();
  return record<T>({n, m}, std::move(out), {in_s, w_s, b_s}, [=](const std::vector<T>& dy) {
    if (in_s->requires_grad) gemm_nt(n, f, m, dy.data(), w_s->data.data(), in_s->grad_buffer().data());
    if (w_s->requires_grad) gemm_tn(f, m, n, in_s->data.data(), dy.data(), w_s->grad_buffer().data());
    if (b_s->requires_grad) {
      auto& gb = b_s->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) gb[j] += dy[i * m + j];
      }
    }
  });
}

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& input, Shape shape) {
  if (shape_numel(shape) != input.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(input.shape()) + " as " + shape_str(shape));
  }
  auto in_s = input.storage();
  return record<T>(std::move(shape), input.values(), {in_s}, [in_s](const std::vector<T>& dy) {
    auto& dx = in_s->grad_buffer();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  });
}

template <class T>
BasicTensor<T> flatten(const BasicTensor<T>& input) {
  if (input.rank() < 2) throw DimensionError("flatten: rank >= 2 required, got " + shape_str(input.shape()));
  return reshape(input, {input.dim(0), input.numel() / input.dim(0)});
}

template <class T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& inputs) {
  if (inputs.empty()) throw DimensionError("concat_channels: empty input list");
  for (const auto& t : inputs) require_rank(t, 4, "concat_channels");
  const std::size_t n = inputs[0].dim(0), h = inputs[0].dim(2), w = inputs[0].dim(3);
  std::size_t total_c = 0;
  for (const auto& t : inputs) {
    if (t.dim(0) != n || t.dim(2) != h || t.dim(3) != w) {
      throw DimensionError("concat_channels: " + shape_str(t.shape()) + " does not match " +
                           shape_str(inputs[0].shape()) + " outside the channel axis");
    }
    total_c += t.dim(1);
  }
  const std::size_t hw = h * w;
  std::vector<T> out(n * total_c * hw);
  std::vector<StoragePtr<T>> storages;
  std::vector<std::size_t> offsets;
  std::size_t c_off = 0;
  for (const auto& t : inputs) {
    const std::size_t c = t.dim(1);
    for (std::size_t b = 0; b < n; ++b) {
      std::copy_n(t.data().data() + b * c * hw, c * hw, out.data() + (b * total_c + c_off) * hw);
    }
    storages.push_back(t.storage());
    offsets.push_back(c_off);
    c_off += c;
  }
  auto parts = storages;
  return record<T>({n, total_c, h, w}, std::move(out), std::move(storages),
                   [parts, offsets, n, total_c, hw](const std::vector<T>& dy) {
                     for (std::size_t k = 0; k < parts.size(); ++k) {
                       if (!parts[k]->requires_grad) continue;
                       auto& dx = parts[k]->grad_buffer();
                       const std::size_t c = parts[k]->shape[1];
                       for (std::size_t b = 0; b < n; ++b) {
                         const T* src = dy.data() + (b * total_c + offsets[k]) * hw;
                         T* dst = dx.data() + b * c * hw;
                         for (std::size_t i = 0; i < c * hw; ++i) dst[i] += src[i];
                       }
                     }
                   });
}

template <class T>
BasicTensor<T> dropout(const BasicTensor<T>& input, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout: rate must lie in [0, 1), got " + std::to_string(p));
  if (mode == Mode::kEval || p == 0.0) return input;
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  auto mask = std::make_shared<std::vector<T>>(input.numel());
  std::vector<T> out(input.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform() >= p ? scale : T{0};
    out[i] = input[i] * (*mask)[i];
  }
  auto in_s = input.storage();
  return record<T>(input.shape(), std::move(out), {in_s}, [in_s, mask](const std::vector<T>& dy) {
    auto& dx = in_s->grad_buffer();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * (*mask)[i];
  });
}

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  require_rank(logits, 2, "softmax");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<T> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data().data() + i * k;
    const T mx = *std::max_element(row, row + k);
    T s{0};
    for (std::size_t j = 0; j < k; ++j) {
      out[i * k + j] = std::exp(row[j] - mx);
      s += out[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= s;
  }
  auto probs = std::make_shared<std::vector<T>>(out);
  auto in_s = logits.storage();
  return record<T>({n, k}, std::move(out), {in_s}, [in_s, probs, n, k](const std::vector<T>& dy) {
    auto& dx = in_s->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      T inner{0};
      for (std::size_t j = 0; j < k; ++j) inner += dy[i * k + j] * (*probs)[i * k + j];
      for (std::size_t j = 0; j < k; ++j) dx[i * k + j] += (*probs)[i * k + j] * (dy[i * k + j] - inner);
    }
  });
}

template <class T>
BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>& logits, const BasicTensor<T>& targets) {
  require_rank(logits, 2, "softmax_cross_entropy");
  if (targets.shape() != logits.shape()) {
    throw DimensionError("softmax_cross_entropy: logits " + shape_str(logits.shape()) + " vs targets " +
                         shape_str(targets.shape()));
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<std::size_t> truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t ones = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const T v = targets[i * k + j];
      if (v == T{1}) {
        ++ones;
        truth[i] = j;
      } else if (v != T{0}) {
        ones = 2;
        break;
      }
    }
    if (ones != 1) throw InputError("softmax_cross_entropy: target row " + std::to_string(i) + " is not one-hot");
  }
  auto probs = std::make_shared<std::vector<T>>(n * k);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data().data() + i * k;
    const T mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(static_cast<double>(row[j] - mx));
    const double lse = static_cast<double>(mx) + std::log(s);
    loss += lse - static_cast<double>(row[truth[i]]);
    for (std::size_t j = 0; j < k; ++j) (*probs)[i * k + j] = static_cast<T>(std::exp(row[j] - lse));
  }
  loss /= static_cast<double>(n);
  auto in_s = logits.storage();
  return record<T>({1}, {static_cast<T>(loss)}, {in_s}, [in_s, probs, truth, n, k](const std::vector<T>& dy) {
    auto& dx = in_s->grad_buffer();
    const T g = dy[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const T target = j == truth[i] ? T{1} : T{0};
        dx[i * k + j] += g * ((*probs)[i * k + j] - target);
      }
    }
  });
}

template <class T>
BasicTensor<T> dot(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("dot: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  }
  T s{0};
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  auto a_s = a.storage();
  auto b_s = b.storage();
  return record<T>({1}, {s}, {a_s, b_s}, [a_s, b_s](const std::vector<T>& dy) {
    if (a_s->requires_grad) {
      auto& da = a_s->grad_buffer();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[0] * b_s->data[i];
    }
    if (b_s->requires_grad) {
      auto& db = b_s->grad_buffer();
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[0] * a_s->data[i];
    }
  });
}

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& input) {
  T s{0};
  for (T v : input.data()) s += v;
  auto in_s = input.storage();
  return record<T>({1}, {s}, {in_s}, [in_s](const std::vector<T>& dy) {
    auto& dx = in_s->grad_buffer();
    for (T& v : dx) v += dy[0];
  });
}

template <class T>
std::vector<std::size_t> argmax_rows(const BasicTensor<T>& matrix) {
  require_rank(matrix, 2, "argmax_rows");
  const std::size_t n = matrix.dim(0), k = matrix.dim(1);
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = matrix.data().data() + i * k;
    out[i] = static_cast<std::size_t>(std::max_element(row, row + k) - row);
  }
  return out;
}

#define MASKDET_INSTANTIATE_OPS(T)                                                                              \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                                  \
                                 const std::optional<BasicTensor<T>>&, const Conv2dOptions&);                   \
  template BasicTensor<T> pool2d(const BasicTensor<T>&, PoolKind, std::size_t, std::size_t, std::size_t);       \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                               \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                          \
  template BasicTensor<T> batch_norm2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,     \
                                       BatchNormState&, Mode, double, double);                                  \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                                \
  template BasicTensor<T> flatten(const BasicTensor<T>&);                                                       \
  template BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>&);                                  \
  template BasicTensor<T> dropout(const BasicTensor<T>&, double, Mode, Rng&);                                   \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                                       \
  template BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>&, const BasicTensor<T>&);                  \
  template BasicTensor<T> dot(const BasicTensor<T>&, const BasicTensor<T>&);                                    \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                           \
  template std::vector<std::size_t> argmax_rows(const BasicTensor<T>&);

MASKDET_INSTANTIATE_OPS(float)
MASKDET_INSTANTIATE_OPS(double)

#undef MASKDET_INSTANTIATE_OPS

}  // namespace maskdet::ops
