#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>

#include "neurostream/nn/parallel.hpp"
#include "neurostream/nn/tensor.hpp"

// Free-function layer ops on 5-D tensors (N, C, D, H, W). Every op has an
// explicit backward that consumes only what its context struct captured, so
// layers stay stateless between calls. Convolutions follow the
// cross-correlation convention.

namespace neurostream::nn {

struct ContextMismatch : Error {
  using Error::Error;
};
struct IndexOutOfWindow : Error {
  using Error::Error;
};
struct DegenerateBatch : Error {
  using Error::Error;
};

struct Dims3 {
  std::size_t d = 1;
  std::size_t h = 1;
  std::size_t w = 1;
};

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t s,
                                std::size_t p) {
  if (k == 0 || s == 0) throw ShapeMismatch("kernel and stride must be >= 1");
  if (in + 2 * p < k)
    throw ShapeMismatch("conv input " + std::to_string(in) + " smaller than kernel " +
                        std::to_string(k) + " with padding " + std::to_string(p));
  return (in + 2 * p - k) / s + 1;
}

inline std::size_t conv_transpose_out_dim(std::size_t in, std::size_t k, std::size_t s,
                                          std::size_t p, std::size_t op) {
  if (k == 0 || s == 0) throw ShapeMismatch("kernel and stride must be >= 1");
  if (op >= s)
    throw ShapeMismatch("output padding " + std::to_string(op) +
                        " must be smaller than stride " + std::to_string(s));
  const std::size_t full = (in - 1) * s + k + op;
  if (full < 2 * p + 1)
    throw ShapeMismatch("transpose padding too large for output extent");
  return full - 2 * p;
}

namespace detail {

template <typename T>
void require_5d(const Tensor<T>& t, const char* what) {
  if (t.ndim() != 5) throw ShapeMismatch(std::string(what) + " must be 5-D, got " + shape_str(t.shape()));
}

// Copies x (N,C,D,H,W) into `out` (N,C,D+2pd,H+2ph,W+2pw) with a zero border.
template <typename T>
void pad3d_into(const Tensor<T>& x, Dims3 pad, Tensor<T>& out) {
  const std::size_t n = x.dim(0), c = x.dim(1), d = x.dim(2), h = x.dim(3), w = x.dim(4);
  const std::size_t dp = d + 2 * pad.d, hp = h + 2 * pad.h, wp = w + 2 * pad.w;
  out.resize({n, c, dp, hp, wp});
  out.zero();
  const T* src = x.ptr();
  T* dst = out.ptr();
  for (std::size_t i = 0; i < n * c; ++i) {
    for (std::size_t id = 0; id < d; ++id) {
      for (std::size_t ih = 0; ih < h; ++ih) {
        const T* row = src + ((i * d + id) * h + ih) * w;
        T* prow = dst + ((i * dp + id + pad.d) * hp + ih + pad.h) * wp + pad.w;
        for (std::size_t iw = 0; iw < w; ++iw) prow[iw] = row[iw];
      }
    }
  }
}

// Drops a zero border: inverse of pad3d_into for matching pad.
template <typename T>
void crop3d_into(const Tensor<T>& xp, Dims3 pad, Dims3 out_dhw, Tensor<T>& out) {
  const std::size_t n = xp.dim(0), c = xp.dim(1);
  const std::size_t dp = xp.dim(2), hp = xp.dim(3), wp = xp.dim(4);
  const std::size_t d = out_dhw.d, h = out_dhw.h, w = out_dhw.w;
  if (d + 2 * pad.d > dp || h + 2 * pad.h > hp || w + 2 * pad.w > wp)
    throw ShapeMismatch("crop region exceeds padded extent");
  out.resize({n, c, d, h, w});
  const T* src = xp.ptr();
  T* dst = out.ptr();
  for (std::size_t i = 0; i < n * c; ++i) {
    for (std::size_t id = 0; id < d; ++id) {
      for (std::size_t ih = 0; ih < h; ++ih) {
        const T* prow = src + ((i * dp + id + pad.d) * hp + ih + pad.h) * wp + pad.w;
        T* row = dst + ((i * d + id) * h + ih) * w;
        for (std::size_t iw = 0; iw < w; ++iw) row[iw] = prow[iw];
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv3d: weight (Co, Ci, kD, kH, kW), optional bias (Co).
// ---------------------------------------------------------------------------

template <typename T>
struct Conv3dGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;  // empty when the op had no bias
};

template <typename T>
void conv3d_forward_into(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                         Dims3 stride, Dims3 pad, Tensor<T>& out, Tensor<T>& padded) {
  detail::require_5d(x, "conv3d input");
  detail::require_5d(w, "conv3d weight");
  const std::size_t n = x.dim(0), ci = x.dim(1);
  const std::size_t co = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  if (w.dim(1) != ci)
    throw ShapeMismatch("conv3d weight expects " + std::to_string(w.dim(1)) +
                        " input channels, tensor has " + std::to_string(ci));
  if (bias.numel() != 0 && bias.numel() != co)
    throw ShapeMismatch("conv3d bias size " + std::to_string(bias.numel()) +
                        " != " + std::to_string(co));
  const std::size_t od = conv_out_dim(x.dim(2), kd, stride.d, pad.d);
  const std::size_t oh = conv_out_dim(x.dim(3), kh, stride.h, pad.h);
  const std::size_t ow = conv_out_dim(x.dim(4), kw, stride.w, pad.w);

  detail::pad3d_into(x, pad, padded);
  const std::size_t dp = padded.dim(2), hp = padded.dim(3), wp = padded.dim(4);
  out.resize({n, co, od, oh, ow});

  const T* xp = padded.ptr();
  const T* wptr = w.ptr();
  const T* bptr = bias.numel() ? bias.ptr() : nullptr;
  T* yp = out.ptr();
  const std::size_t out_img = od * oh * ow;

  parallel_for(n * co, [&](std::size_t begin, std::size_t end) {
    for (std::size_t nc = begin; nc < end; ++nc) {
      const std::size_t in = nc / co, oc = nc % co;
      T* ybase = yp + nc * out_img;
      const T init = bptr ? bptr[oc] : T(0);
      for (std::size_t i = 0; i < out_img; ++i) ybase[i] = init;
      for (std::size_t ic = 0; ic < ci; ++ic) {
        const T* xbase = xp + (in * ci + ic) * dp * hp * wp;
        const T* wbase = wptr + (oc * ci + ic) * kd * kh * kw;
        for (std::size_t fd = 0; fd < kd; ++fd) {
          for (std::size_t fh = 0; fh < kh; ++fh) {
            for (std::size_t fw = 0; fw < kw; ++fw) {
              const T wv = wbase[(fd * kh + fh) * kw + fw];
              if (wv == T(0)) continue;
              for (std::size_t zd = 0; zd < od; ++zd) {
                const std::size_t idp = zd * stride.d + fd;
                for (std::size_t zh = 0; zh < oh; ++zh) {
                  const T* xrow = xbase + (idp * hp + zh * stride.h + fh) * wp + fw;
                  T* yrow = ybase + (zd * oh + zh) * ow;
                  if (stride.w == 1) {
                    for (std::size_t zw = 0; zw < ow; ++zw) yrow[zw] += wv * xrow[zw];
                  } else {
                    for (std::size_t zw = 0; zw < ow; ++zw)
                      yrow[zw] += wv * xrow[zw * stride.w];
                  }
                }
              }
            }
          }
        }
      }
    }
  });
}

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                         Dims3 stride, Dims3 pad) {
  Tensor<T> out, padded;
  conv3d_forward_into(x, w, bias, stride, pad, out, padded);
  return out;
}

template <typename T>
Conv3dGrads<T> conv3d_backward(const Tensor<T>& x, const Tensor<T>& w, bool has_bias,
                               Dims3 stride, Dims3 pad, const Tensor<T>& grad_out) {
  detail::require_5d(x, "conv3d input");
  detail::require_5d(w, "conv3d weight");
  detail::require_5d(grad_out, "conv3d grad_out");
  const std::size_t n = x.dim(0), ci = x.dim(1);
  const std::size_t co = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  const std::size_t od = conv_out_dim(x.dim(2), kd, stride.d, pad.d);
  const std::size_t oh = conv_out_dim(x.dim(3), kh, stride.h, pad.h);
  const std::size_t ow = conv_out_dim(x.dim(4), kw, stride.w, pad.w);
  const std::vector<std::size_t> want{n, co, od, oh, ow};
  if (grad_out.shape() != want)
    throw ContextMismatch("conv3d grad_out is " + shape_str(grad_out.shape()) +
                          ", expected " + shape_str(want));

  Conv3dGrads<T> g;
  const T* gy = grad_out.ptr();
  const std::size_t out_img = od * oh * ow;

  if (has_bias) {
    g.bias = Tensor<T>({co});
    T* gb = g.bias.ptr();
    for (std::size_t in = 0; in < n; ++in) {
      for (std::size_t oc = 0; oc < co; ++oc) {
        double acc = 0.0;
        const T* row = gy + (in * co + oc) * out_img;
        for (std::size_t i = 0; i < out_img; ++i) acc += static_cast<double>(row[i]);
        gb[oc] += static_cast<T>(acc);
      }
    }
  }

  Tensor<T> padded;
  detail::pad3d_into(x, pad, padded);
  const std::size_t dp = padded.dim(2), hp = padded.dim(3), wp = padded.dim(4);
  const T* xp = padded.ptr();

  // Weight gradient: correlate grad_out against the padded input.
  g.weight = Tensor<T>(w.shape());
  T* gw = g.weight.ptr();
  parallel_for(co, [&](std::size_t begin, std::size_t end) {
    for (std::size_t oc = begin; oc < end; ++oc) {
      for (std::size_t ic = 0; ic < ci; ++ic) {
        T* gwbase = gw + (oc * ci + ic) * kd * kh * kw;
        for (std::size_t fd = 0; fd < kd; ++fd) {
          for (std::size_t fh = 0; fh < kh; ++fh) {
            for (std::size_t fw = 0; fw < kw; ++fw) {
              T acc = T(0);
              for (std::size_t in = 0; in < n; ++in) {
                const T* xbase = xp + (in * ci + ic) * dp * hp * wp;
                const T* ybase = gy + (in * co + oc) * out_img;
                for (std::size_t zd = 0; zd < od; ++zd) {
                  const std::size_t idp = zd * stride.d + fd;
                  for (std::size_t zh = 0; zh < oh; ++zh) {
                    const T* xrow = xbase + (idp * hp + zh * stride.h + fh) * wp + fw;
                    const T* yrow = ybase + (zd * oh + zh) * ow;
                    if (stride.w == 1) {
                      for (std::size_t zw = 0; zw < ow; ++zw) acc += yrow[zw] * xrow[zw];
                    } else {
                      for (std::size_t zw = 0; zw < ow; ++zw)
                        acc += yrow[zw] * xrow[zw * stride.w];
                    }
                  }
                }
              }
              gwbase[(fd * kh + fh) * kw + fw] = acc;
            }
          }
        }
      }
    }
  });

  // Input gradient: scatter grad_out through the kernel into a padded buffer.
  Tensor<T> gxp({n, ci, dp, hp, wp});
  T* gxpp = gxp.ptr();
  const T* wptr = w.ptr();
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t in = begin; in < end; ++in) {
      for (std::size_t oc = 0; oc < co; ++oc) {
        const T* ybase = gy + (in * co + oc) * out_img;
        for (std::size_t ic = 0; ic < ci; ++ic) {
          T* gxbase = gxpp + (in * ci + ic) * dp * hp * wp;
          const T* wbase = wptr + (oc * ci + ic) * kd * kh * kw;
          for (std::size_t fd = 0; fd < kd; ++fd) {
            for (std::size_t fh = 0; fh < kh; ++fh) {
              for (std::size_t fw = 0; fw < kw; ++fw) {
                const T wv = wbase[(fd * kh + fh) * kw + fw];
                if (wv == T(0)) continue;
                for (std::size_t zd = 0; zd < od; ++zd) {
                  const std::size_t idp = zd * stride.d + fd;
                  for (std::size_t zh = 0; zh < oh; ++zh) {
                    T* gxrow = gxbase + (idp * hp + zh * stride.h + fh) * wp + fw;
                    const T* yrow = ybase + (zd * oh + zh) * ow;
                    if (stride.w == 1) {
                      for (std::size_t zw = 0; zw < ow; ++zw) gxrow[zw] += wv * yrow[zw];
                    } else {
                      for (std::size_t zw = 0; zw < ow; ++zw)
                        gxrow[zw * stride.w] += wv * yrow[zw];
                    }
                  }
                }
              }
            }
          }
        }
      }
    }
  });
  g.input = Tensor<T>();
  detail::crop3d_into(gxp, pad, Dims3{x.dim(2), x.dim(3), x.dim(4)}, g.input);
  return g;
}

// ---------------------------------------------------------------------------
// conv3d_transpose: weight (Ci, Co, kD, kH, kW), optional bias (Co).
// Gradient of conv3d w.r.t. its input, exposed as a forward op.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv3d_transpose_forward(const Tensor<T>& x, const Tensor<T>& w,
                                   const Tensor<T>& bias, Dims3 stride, Dims3 pad,
                                   Dims3 output_pad) {
  detail::require_5d(x, "conv3d_transpose input");
  detail::require_5d(w, "conv3d_transpose weight");
  const std::size_t n = x.dim(0), ci = x.dim(1), d = x.dim(2), h = x.dim(3), wd = x.dim(4);
  const std::size_t co = w.dim(1), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  if (w.dim(0) != ci)
    throw ShapeMismatch("conv3d_transpose weight expects " + std::to_string(w.dim(0)) +
                        " input channels, tensor has " + std::to_string(ci));
  if (bias.numel() != 0 && bias.numel() != co)
    throw ShapeMismatch("conv3d_transpose bias size " + std::to_string(bias.numel()) +
                        " != " + std::to_string(co));
  const std::size_t od = conv_transpose_out_dim(d, kd, stride.d, pad.d, output_pad.d);
  const std::size_t oh = conv_transpose_out_dim(h, kh, stride.h, pad.h, output_pad.h);
  const std::size_t ow = conv_transpose_out_dim(wd, kw, stride.w, pad.w, output_pad.w);

  // Scatter into the uncropped extent, then drop the `pad` border.
  const std::size_t df = od + 2 * pad.d, hf = oh + 2 * pad.h, wf = ow + 2 * pad.w;
  Tensor<T> full({n, co, df, hf, wf});
  T* fp = full.ptr();
  const T* xptr = x.ptr();
  const T* wptr = w.ptr();
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t in = begin; in < end; ++in) {
      for (std::size_t ic = 0; ic < ci; ++ic) {
        const T* xbase = xptr + (in * ci + ic) * d * h * wd;
        for (std::size_t oc = 0; oc < co; ++oc) {
          T* fbase = fp + (in * co + oc) * df * hf * wf;
          const T* wbase = wptr + (ic * co + oc) * kd * kh * kw;
          for (std::size_t fd = 0; fd < kd; ++fd) {
            for (std::size_t fh = 0; fh < kh; ++fh) {
              for (std::size_t fw = 0; fw < kw; ++fw) {
                const T wv = wbase[(fd * kh + fh) * kw + fw];
                if (wv == T(0)) continue;
                for (std::size_t id = 0; id < d; ++id) {
                  const std::size_t fdp = id * stride.d + fd;
                  for (std::size_t ih = 0; ih < h; ++ih) {
                    const T* xrow = xbase + (id * h + ih) * wd;
                    T* frow = fbase + (fdp * hf + ih * stride.h + fh) * wf + fw;
                    if (stride.w == 1) {
                      for (std::size_t iw = 0; iw < wd; ++iw) frow[iw] += wv * xrow[iw];
                    } else {
                      for (std::size_t iw = 0; iw < wd; ++iw)
                        frow[iw * stride.w] += wv * xrow[iw];
                    }
                  }
                }
              }
            }
          }
        }
      }
    }
  });

  Tensor<T> out;
  detail::crop3d_into(full, pad, Dims3{od, oh, ow}, out);
  if (bias.numel()) {
    const T* bptr = bias.ptr();
    T* yp = out.ptr();
    const std::size_t img = od * oh * ow;
    for (std::size_t in = 0; in < n; ++in)
      for (std::size_t oc = 0; oc < co; ++oc) {
        T* row = yp + (in * co + oc) * img;
        for (std::size_t i = 0; i < img; ++i) row[i] += bptr[oc];
      }
  }
  return out;
}

template <typename T>
Conv3dGrads<T> conv3d_transpose_backward(const Tensor<T>& x, const Tensor<T>& w,
                                         bool has_bias, Dims3 stride, Dims3 pad,
                                         Dims3 output_pad, const Tensor<T>& grad_out) {
  detail::require_5d(x, "conv3d_transpose input");
  detail::require_5d(w, "conv3d_transpose weight");
  detail::require_5d(grad_out, "conv3d_transpose grad_out");
  const std::size_t n = x.dim(0), ci = x.dim(1), d = x.dim(2), h = x.dim(3), wd = x.dim(4);
  const std::size_t co = w.dim(1), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  const std::size_t od = conv_transpose_out_dim(d, kd, stride.d, pad.d, output_pad.d);
  const std::size_t oh = conv_transpose_out_dim(h, kh, stride.h, pad.h, output_pad.h);
  const std::size_t ow = conv_transpose_out_dim(wd, kw, stride.w, pad.w, output_pad.w);
  const std::vector<std::size_t> want{n, co, od, oh, ow};
  if (grad_out.shape() != want)
    throw ContextMismatch("conv3d_transpose grad_out is " + shape_str(grad_out.shape()) +
                          ", expected " + shape_str(want));

  Conv3dGrads<T> g;
  const T* gy = grad_out.ptr();
  const std::size_t out_img = od * oh * ow;

  if (has_bias) {
    g.bias = Tensor<T>({co});
    T* gb = g.bias.ptr();
    for (std::size_t in = 0; in < n; ++in)
      for (std::size_t oc = 0; oc < co; ++oc) {
        double acc = 0.0;
        const T* row = gy + (in * co + oc) * out_img;
        for (std::size_t i = 0; i < out_img; ++i) acc += static_cast<double>(row[i]);
        gb[oc] += static_cast<T>(acc);
      }
  }

  // Input gradient: a plain conv of grad_out with the same weight read as
  // (Ci_out=ci, Co_in=co, k...) — the adjoint of the scatter above.
  g.input = conv3d_forward(grad_out, w, Tensor<T>(), stride, pad);
  if (g.input.shape() != x.shape())
    throw ContextMismatch("conv3d_transpose input gradient is " +
                          shape_str(g.input.shape()) + ", expected " +
                          shape_str(x.shape()));

  // Weight gradient: gw[ic,oc,f] = sum_n,i x[n,ic,i] * gyp[n,oc,i*s+f],
  // with grad_out padded back to the uncropped extent.
  Tensor<T> gyp;
  detail::pad3d_into(grad_out, pad, gyp);
  const std::size_t df = gyp.dim(2), hf = gyp.dim(3), wf = gyp.dim(4);
  const T* gypp = gyp.ptr();
  const T* xptr = x.ptr();
  g.weight = Tensor<T>(w.shape());
  T* gw = g.weight.ptr();
  parallel_for(ci, [&](std::size_t begin, std::size_t end) {
    for (std::size_t ic = begin; ic < end; ++ic) {
      for (std::size_t oc = 0; oc < co; ++oc) {
        T* gwbase = gw + (ic * co + oc) * kd * kh * kw;
        for (std::size_t fd = 0; fd < kd; ++fd) {
          for (std::size_t fh = 0; fh < kh; ++fh) {
            for (std::size_t fw = 0; fw < kw; ++fw) {
              T acc = T(0);
              for (std::size_t in = 0; in < n; ++in) {
                const T* xbase = xptr + (in * ci + ic) * d * h * wd;
                const T* ybase = gypp + (in * co + oc) * df * hf * wf;
                for (std::size_t id = 0; id < d; ++id) {
                  const std::size_t fdp = id * stride.d + fd;
                  for (std::size_t ih = 0; ih < h; ++ih) {
                    const T* xrow = xbase + (id * h + ih) * wd;
                    const T* yrow = ybase + (fdp * hf + ih * stride.h + fh) * wf + fw;
                    if (stride.w == 1) {
                      for (std::size_t iw = 0; iw < wd; ++iw) acc += xrow[iw] * yrow[iw];
                    } else {
                      for (std::size_t iw = 0; iw < wd; ++iw)
                        acc += xrow[iw] * yrow[iw * stride.w];
                    }
                  }
                }
              }
              gwbase[(fd * kh + fh) * kw + fw] = acc;
            }
          }
        }
      }
    }
  });
  return g;
}

// ---------------------------------------------------------------------------
// maxpool3d / maxunpool3d. Padding contributes -inf cells (never selected).
// PoolIndices stores, per output cell, the flat index of the winning input.
// ---------------------------------------------------------------------------

struct PoolIndices {
  std::vector<std::size_t> input_shape;
  std::vector<std::size_t> output_shape;
  std::vector<std::uint64_t> index;  // flat into the unpadded input
};

template <typename T>
std::pair<Tensor<T>, PoolIndices> maxpool3d_forward(const Tensor<T>& x, Dims3 kernel,
                                                    Dims3 stride, Dims3 pad) {
  detail::require_5d(x, "maxpool3d input");
  if (pad.d >= kernel.d || pad.h >= kernel.h || pad.w >= kernel.w)
    throw ShapeMismatch("maxpool3d padding must be smaller than the kernel");
  const std::size_t n = x.dim(0), c = x.dim(1), d = x.dim(2), h = x.dim(3), w = x.dim(4);
  const std::size_t od = conv_out_dim(d, kernel.d, stride.d, pad.d);
  const std::size_t oh = conv_out_dim(h, kernel.h, stride.h, pad.h);
  const std::size_t ow = conv_out_dim(w, kernel.w, stride.w, pad.w);

  Tensor<T> y({n, c, od, oh, ow});
  PoolIndices ind;
  ind.input_shape = x.shape();
  ind.output_shape = y.shape();
  ind.index.resize(y.numel());

  const T* xp = x.ptr();
  T* yp = y.ptr();
  std::size_t o = 0;
  for (std::size_t i = 0; i < n * c; ++i) {
    const T* xbase = xp + i * d * h * w;
    const std::size_t flat_base = i * d * h * w;
    for (std::size_t zd = 0; zd < od; ++zd) {
      for (std::size_t zh = 0; zh < oh; ++zh) {
        for (std::size_t zw = 0; zw < ow; ++zw, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::uint64_t best_idx = 0;
          bool found = false;
          for (std::size_t fd = 0; fd < kernel.d; ++fd) {
            const std::size_t idp = zd * stride.d + fd;
            if (idp < pad.d || idp >= d + pad.d) continue;
            const std::size_t id = idp - pad.d;
            for (std::size_t fh = 0; fh < kernel.h; ++fh) {
              const std::size_t ihp = zh * stride.h + fh;
              if (ihp < pad.h || ihp >= h + pad.h) continue;
              const std::size_t ih = ihp - pad.h;
              for (std::size_t fw = 0; fw < kernel.w; ++fw) {
                const std::size_t iwp = zw * stride.w + fw;
                if (iwp < pad.w || iwp >= w + pad.w) continue;
                const std::size_t iw = iwp - pad.w;
                const T v = xbase[(id * h + ih) * w + iw];
                if (!found || v > best) {
                  found = true;
                  best = v;
                  best_idx = flat_base + (id * h + ih) * w + iw;
                }
              }
            }
          }
          if (!found)
            throw ShapeMismatch("maxpool3d window contains no input cells");
          yp[o] = best;
          ind.index[o] = best_idx;
        }
      }
    }
  }
  return {std::move(y), std::move(ind)};
}

template <typename T>
Tensor<T> maxpool3d_backward(const PoolIndices& ind, const Tensor<T>& grad_out) {
  if (grad_out.shape() != ind.output_shape)
    throw ContextMismatch("maxpool3d grad_out is " + shape_str(grad_out.shape()) +
                          ", expected " + shape_str(ind.output_shape));
  Tensor<T> gx(ind.input_shape);
  T* gp = gx.ptr();
  const T* gy = grad_out.ptr();
  for (std::size_t o = 0; o < ind.index.size(); ++o) gp[ind.index[o]] += gy[o];
  return gx;
}

// Validates that every saved index falls inside the window that produced it.
inline void check_pool_indices(const PoolIndices& ind, Dims3 kernel, Dims3 stride,
                               Dims3 pad) {
  const auto& is = ind.input_shape;
  const auto& os = ind.output_shape;
  if (is.size() != 5 || os.size() != 5)
    throw ContextMismatch("pool indices lack 5-D shape metadata");
  const std::size_t d = is[2], h = is[3], w = is[4];
  const std::size_t od = os[2], oh = os[3], ow = os[4];
  const std::size_t img = d * h * w, out_img = od * oh * ow;
  for (std::size_t o = 0; o < ind.index.size(); ++o) {
    const std::uint64_t idx = ind.index[o];
    const std::size_t nc_out = o / out_img;
    if (idx / img != nc_out)
      throw IndexOutOfWindow("pool index " + std::to_string(idx) +
                             " crosses image boundary at output cell " + std::to_string(o));
    const std::size_t rem_o = o % out_img;
    const std::size_t zd = rem_o / (oh * ow), zh = (rem_o / ow) % oh, zw = rem_o % ow;
    const std::size_t rem_i = idx % img;
    const std::size_t id = rem_i / (h * w), ih = (rem_i / w) % h, iw = rem_i % w;
    const auto in_window = [](std::size_t i, std::size_t z, std::size_t k, std::size_t s,
                              std::size_t p) {
      const std::size_t lo = z * s;          // padded coordinates
      const std::size_t ip = i + p;
      return ip >= lo && ip < lo + k;
    };
    if (!in_window(id, zd, kernel.d, stride.d, pad.d) ||
        !in_window(ih, zh, kernel.h, stride.h, pad.h) ||
        !in_window(iw, zw, kernel.w, stride.w, pad.w))
      throw IndexOutOfWindow("pool index " + std::to_string(idx) +
                             " outside its window at output cell " + std::to_string(o));
  }
}

template <typename T>
Tensor<T> maxunpool3d_forward(const Tensor<T>& x, const PoolIndices& ind, Dims3 kernel,
                              Dims3 stride, Dims3 pad) {
  if (x.shape() != ind.output_shape)
    throw ContextMismatch("maxunpool3d input is " + shape_str(x.shape()) +
                          ", indices expect " + shape_str(ind.output_shape));
  check_pool_indices(ind, kernel, stride, pad);
  Tensor<T> y(ind.input_shape);
  T* yp = y.ptr();
  const T* xp = x.ptr();
  for (std::size_t o = 0; o < ind.index.size(); ++o) yp[ind.index[o]] = xp[o];
  return y;
}

template <typename T>
Tensor<T> maxunpool3d_backward(const PoolIndices& ind, const Tensor<T>& grad_out) {
  if (grad_out.shape() != ind.input_shape)
    throw ContextMismatch("maxunpool3d grad_out is " + shape_str(grad_out.shape()) +
                          ", expected " + shape_str(ind.input_shape));
  Tensor<T> gx(ind.output_shape);
  T* gp = gx.ptr();
  const T* gy = grad_out.ptr();
  for (std::size_t o = 0; o < ind.index.size(); ++o) gp[o] = gy[ind.index[o]];
  return gx;
}

// Decoder fallback when encoder indices are unavailable: place each pooled
// value at its window origin (clamped into the unpadded extent).
inline PoolIndices origin_pool_indices(const std::vector<std::size_t>& input_shape,
                                       const std::vector<std::size_t>& output_shape,
                                       Dims3 stride, Dims3 pad) {
  PoolIndices ind;
  ind.input_shape = input_shape;
  ind.output_shape = output_shape;
  const std::size_t d = input_shape[2], h = input_shape[3], w = input_shape[4];
  const std::size_t od = output_shape[2], oh = output_shape[3], ow = output_shape[4];
  const std::size_t nc = output_shape[0] * output_shape[1];
  ind.index.reserve(nc * od * oh * ow);
  const auto origin = [](std::size_t z, std::size_t s, std::size_t p, std::size_t lim) {
    const std::size_t zs = z * s;
    std::size_t i = zs > p ? zs - p : 0;
    if (i >= lim) i = lim - 1;
    return i;
  };
  for (std::size_t i = 0; i < nc; ++i) {
    const std::size_t flat_base = i * d * h * w;
    for (std::size_t zd = 0; zd < od; ++zd) {
      const std::size_t id = origin(zd, stride.d, pad.d, d);
      for (std::size_t zh = 0; zh < oh; ++zh) {
        const std::size_t ih = origin(zh, stride.h, pad.h, h);
        for (std::size_t zw = 0; zw < ow; ++zw) {
          const std::size_t iw = origin(zw, stride.w, pad.w, w);
          ind.index.push_back(flat_base + (id * h + ih) * w + iw);
        }
      }
    }
  }
  return ind;
}

// ---------------------------------------------------------------------------
// batchnorm over (N, D, H, W) per channel.
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNormContext {
  Tensor<T> xhat;
  std::vector<T> inv_std;  // one per channel
  bool training = false;
};

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const Tensor<T>& gamma,
                            const Tensor<T>& beta, Tensor<T>& running_mean,
                            Tensor<T>& running_var, bool training, T momentum, T eps,
                            BatchNormContext<T>* ctx) {
  detail::require_5d(x, "batchnorm input");
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t img = x.dim(2) * x.dim(3) * x.dim(4);
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c ||
      running_var.numel() != c)
    throw ShapeMismatch("batchnorm parameter size != channel count " + std::to_string(c));
  if (training && n < 2)
    throw DegenerateBatch("batchnorm requires batch size >= 2 in training mode, got " +
                          std::to_string(n));
  const std::size_t m = n * img;

  Tensor<T> y(x.shape());
  if (ctx) {
    ctx->xhat.resize(x.shape());
    ctx->inv_std.assign(c, T(0));
    ctx->training = training;
  }
  const T* xp = x.ptr();
  T* yp = y.ptr();
  const T* gp = gamma.ptr();
  const T* bp = beta.ptr();
  T* rm = running_mean.ptr();
  T* rv = running_var.ptr();

  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean, var;
    if (training) {
      double acc = 0.0;
      for (std::size_t in = 0; in < n; ++in) {
        const T* row = xp + (in * c + ch) * img;
        for (std::size_t i = 0; i < img; ++i) acc += static_cast<double>(row[i]);
      }
      mean = acc / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t in = 0; in < n; ++in) {
        const T* row = xp + (in * c + ch) * img;
        for (std::size_t i = 0; i < img; ++i) {
          const double dv = static_cast<double>(row[i]) - mean;
          sq += dv * dv;
        }
      }
      var = sq / static_cast<double>(m);  // biased, used for normalization
      const double unbiased = sq / static_cast<double>(m - 1);
      rm[ch] = static_cast<T>((1.0 - static_cast<double>(momentum)) * rm[ch] +
                              static_cast<double>(momentum) * mean);
      rv[ch] = static_cast<T>((1.0 - static_cast<double>(momentum)) * rv[ch] +
                              static_cast<double>(momentum) * unbiased);
    } else {
      mean = static_cast<double>(rm[ch]);
      var = static_cast<double>(rv[ch]);
    }
    const double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
    if (ctx) ctx->inv_std[ch] = static_cast<T>(is);
    const T g = gp[ch], b = bp[ch];
    for (std::size_t in = 0; in < n; ++in) {
      const T* row = xp + (in * c + ch) * img;
      T* yrow = yp + (in * c + ch) * img;
      T* hrow = ctx ? ctx->xhat.ptr() + (in * c + ch) * img : nullptr;
      for (std::size_t i = 0; i < img; ++i) {
        const T xh = static_cast<T>((static_cast<double>(row[i]) - mean) * is);
        if (hrow) hrow[i] = xh;
        yrow[i] = g * xh + b;
      }
    }
  }
  return y;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormContext<T>& ctx, const Tensor<T>& gamma,
                                     const Tensor<T>& grad_out) {
  if (grad_out.shape() != ctx.xhat.shape())
    throw ContextMismatch("batchnorm grad_out is " + shape_str(grad_out.shape()) +
                          ", expected " + shape_str(ctx.xhat.shape()));
  const std::size_t n = grad_out.dim(0), c = grad_out.dim(1);
  const std::size_t img = grad_out.dim(2) * grad_out.dim(3) * grad_out.dim(4);
  if (gamma.numel() != c) throw ShapeMismatch("batchnorm gamma size != channel count");
  const double m = static_cast<double>(n * img);

  BatchNormGrads<T> g;
  g.input = Tensor<T>(grad_out.shape());
  g.gamma = Tensor<T>({c});
  g.beta = Tensor<T>({c});
  const T* gy = grad_out.ptr();
  const T* xh = ctx.xhat.ptr();
  const T* gp = gamma.ptr();
  T* gx = g.input.ptr();
  T* gg = g.gamma.ptr();
  T* gb = g.beta.ptr();

  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_gy = 0.0, sum_gy_xh = 0.0;
    for (std::size_t in = 0; in < n; ++in) {
      const std::size_t base = (in * c + ch) * img;
      for (std::size_t i = 0; i < img; ++i) {
        sum_gy += static_cast<double>(gy[base + i]);
        sum_gy_xh += static_cast<double>(gy[base + i]) * static_cast<double>(xh[base + i]);
      }
    }
    gg[ch] = static_cast<T>(sum_gy_xh);
    gb[ch] = static_cast<T>(sum_gy);
    const double gis = static_cast<double>(gp[ch]) * static_cast<double>(ctx.inv_std[ch]);
    if (ctx.training) {
      const double mean_gy = sum_gy / m, mean_gy_xh = sum_gy_xh / m;
      for (std::size_t in = 0; in < n; ++in) {
        const std::size_t base = (in * c + ch) * img;
        for (std::size_t i = 0; i < img; ++i)
          gx[base + i] = static_cast<T>(
              gis * (static_cast<double>(gy[base + i]) - mean_gy -
                     static_cast<double>(xh[base + i]) * mean_gy_xh));
      }
    } else {
      for (std::size_t in = 0; in < n; ++in) {
        const std::size_t base = (in * c + ch) * img;
        for (std::size_t i = 0; i < img; ++i)
          gx[base + i] = static_cast<T>(gis * static_cast<double>(gy[base + i]));
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// linear: x (N, Fi), weight (Fo, Fi), bias (Fo).
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  if (x.ndim() != 2 || w.ndim() != 2)
    throw ShapeMismatch("linear expects 2-D input and weight, got " +
                        shape_str(x.shape()) + " and " + shape_str(w.shape()));
  const std::size_t n = x.dim(0), fi = x.dim(1), fo = w.dim(0);
  if (w.dim(1) != fi)
    throw ShapeMismatch("linear weight expects " + std::to_string(w.dim(1)) +
                        " features, input has " + std::to_string(fi));
  if (bias.numel() != 0 && bias.numel() != fo)
    throw ShapeMismatch("linear bias size mismatch");
  Tensor<T> y({n, fo});
  const T* xp = x.ptr();
  const T* wp = w.ptr();
  const T* bp = bias.numel() ? bias.ptr() : nullptr;
  T* yp = y.ptr();
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t in = begin; in < end; ++in) {
      const T* xrow = xp + in * fi;
      T* yrow = yp + in * fo;
      for (std::size_t o = 0; o < fo; ++o) {
        const T* wrow = wp + o * fi;
        T acc = bp ? bp[o] : T(0);
        for (std::size_t i = 0; i < fi; ++i) acc += xrow[i] * wrow[i];
        yrow[o] = acc;
      }
    }
  });
  return y;
}

template <typename T>
struct LinearGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& w, bool has_bias,
                               const Tensor<T>& grad_out) {
  const std::size_t n = x.dim(0), fi = x.dim(1), fo = w.dim(0);
  const std::vector<std::size_t> want{n, fo};
  if (grad_out.shape() != want)
    throw ContextMismatch("linear grad_out is " + shape_str(grad_out.shape()) +
                          ", expected " + shape_str(want));
  LinearGrads<T> g;
  g.input = Tensor<T>({n, fi});
  g.weight = Tensor<T>({fo, fi});
  const T* xp = x.ptr();
  const T* wp = w.ptr();
  const T* gy = grad_out.ptr();
  T* gx = g.input.ptr();
  T* gw = g.weight.ptr();
  for (std::size_t in = 0; in < n; ++in) {
    const T* grow = gy + in * fo;
    const T* xrow = xp + in * fi;
    T* gxrow = gx + in * fi;
    for (std::size_t o = 0; o < fo; ++o) {
      const T gv = grow[o];
      if (gv == T(0)) continue;
      const T* wrow = wp + o * fi;
      T* gwrow = gw + o * fi;
      for (std::size_t i = 0; i < fi; ++i) {
        gxrow[i] += gv * wrow[i];
        gwrow[i] += gv * xrow[i];
      }
    }
  }
  if (has_bias) {
    g.bias = Tensor<T>({fo});
    T* gb = g.bias.ptr();
    for (std::size_t in = 0; in < n; ++in)
      for (std::size_t o = 0; o < fo; ++o) gb[o] += gy[in * fo + o];
  }
  return g;
}

// ---------------------------------------------------------------------------
// relu / mse
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const T* xp = x.ptr();
  T* yp = y.ptr();
  for (std::size_t i = 0; i < x.numel(); ++i) yp[i] = xp[i] > T(0) ? xp[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  if (grad_out.shape() != x.shape())
    throw ContextMismatch("relu grad_out is " + shape_str(grad_out.shape()) +
                          ", expected " + shape_str(x.shape()));
  Tensor<T> gx(x.shape());
  const T* xp = x.ptr();
  const T* gy = grad_out.ptr();
  T* gp = gx.ptr();
  for (std::size_t i = 0; i < x.numel(); ++i) gp[i] = xp[i] > T(0) ? gy[i] : T(0);
  return gx;
}

enum class Reduction { sum, mean };

// Squared reconstruction error ||x - x_tilde||_2^2 (optionally averaged).
template <typename T>
double mse_loss(const Tensor<T>& x_tilde, const Tensor<T>& x, Reduction red) {
  if (x_tilde.shape() != x.shape())
    throw ShapeMismatch("mse operands differ: " + shape_str(x_tilde.shape()) + " vs " +
                        shape_str(x.shape()));
  const T* a = x_tilde.ptr();
  const T* b = x.ptr();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double dv = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += dv * dv;
  }
  return red == Reduction::mean ? acc / static_cast<double>(x.numel()) : acc;
}

// Gradient w.r.t. x_tilde.
template <typename T>
Tensor<T> mse_loss_grad(const Tensor<T>& x_tilde, const Tensor<T>& x, Reduction red) {
  if (x_tilde.shape() != x.shape())
    throw ShapeMismatch("mse operands differ: " + shape_str(x_tilde.shape()) + " vs " +
                        shape_str(x.shape()));
  Tensor<T> g(x.shape());
  const T* a = x_tilde.ptr();
  const T* b = x.ptr();
  T* gp = g.ptr();
  const double scale = red == Reduction::mean ? 2.0 / static_cast<double>(x.numel()) : 2.0;
  for (std::size_t i = 0; i < x.numel(); ++i)
    gp[i] = static_cast<T>(scale * (static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return g;
}

}  // namespace neurostream::nn
