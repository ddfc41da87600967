#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mfnet/tensor.hpp"

namespace mfnet {

// 2D convolution layer over [B, C, T, F] maps. Weight layout is
// [out_channels, in_channels / groups, kh, kw]; bias is [out_channels].
template <typename T>
struct Conv2d {
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int64_t kh = 1, kw = 1;
  int64_t sh = 1, sw = 1;
  int64_t ph = 0, pw = 0;
  int64_t groups = 1;
  TensorT<T> weight;
  TensorT<T> bias;
};

template <typename T>
Conv2d<T> make_conv2d(int64_t in_channels, int64_t out_channels, int64_t kh, int64_t kw,
                      int64_t sh = 1, int64_t sw = 1, int64_t ph = 0, int64_t pw = 0,
                      int64_t groups = 1) {
  if (in_channels <= 0 || out_channels <= 0 || kh <= 0 || kw <= 0 || sh <= 0 || sw <= 0 ||
      ph < 0 || pw < 0 || groups <= 0) {
    throw ShapeError("conv2d: nonpositive layer dimension");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw ShapeError("conv2d: groups " + std::to_string(groups) + " must divide channels " +
                     std::to_string(in_channels) + "/" + std::to_string(out_channels));
  }
  Conv2d<T> conv;
  conv.in_channels = in_channels;
  conv.out_channels = out_channels;
  conv.kh = kh;
  conv.kw = kw;
  conv.sh = sh;
  conv.sw = sw;
  conv.ph = ph;
  conv.pw = pw;
  conv.groups = groups;
  conv.weight = TensorT<T>::zeros({out_channels, in_channels / groups, kh, kw}, true);
  conv.bias = TensorT<T>::zeros({out_channels}, true);
  return conv;
}

// MAC count of one convolution producing a [to x fo] map. Element-wise work
// (bias adds, gates, norms) is excluded by convention.
inline int64_t conv2d_macs(int64_t in_channels, int64_t out_channels, int64_t groups, int64_t kh,
                           int64_t kw, int64_t to, int64_t fo) {
  return (in_channels / groups) * out_channels * kh * kw * to * fo;
}

namespace detail {

template <typename T>
struct ConvDims {
  int64_t b, c, t, f, to, fo;
};

template <typename T>
ConvDims<T> conv_check(const TensorT<T>& x, const Conv2d<T>& conv) {
  if (x.rank() != 4) {
    throw ShapeError("conv2d: input must be [B,C,T,F], got " + shape_str(x.shape()));
  }
  const int64_t b = x.dim(0), c = x.dim(1), t = x.dim(2), f = x.dim(3);
  if (c != conv.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(c) + " channels, layer expects " +
                     std::to_string(conv.in_channels) + " (input " + shape_str(x.shape()) + ")");
  }
  const int64_t tn = t + 2 * conv.ph - conv.kh;
  const int64_t fn = f + 2 * conv.pw - conv.kw;
  if (tn < 0 || fn < 0 || tn % conv.sh != 0 || fn % conv.sw != 0) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " is not an exact multiple of " +
                     "stride " + std::to_string(conv.sh) + "x" + std::to_string(conv.sw) +
                     " with kernel " + std::to_string(conv.kh) + "x" + std::to_string(conv.kw) +
                     " pad " + std::to_string(conv.ph) + "x" + std::to_string(conv.pw));
  }
  return {b, c, t, f, tn / conv.sh + 1, fn / conv.sw + 1};
}

// Copies [B,C,T,F] values into a zero-padded [B,C,T+2ph,F+2pw] buffer.
template <typename T>
std::vector<T> pad_plane(const std::vector<T>& x, int64_t b, int64_t c, int64_t t, int64_t f,
                         int64_t ph, int64_t pw) {
  const int64_t tp = t + 2 * ph, fp = f + 2 * pw;
  std::vector<T> out(static_cast<size_t>(b * c * tp * fp), T(0));
  for (int64_t i = 0; i < b * c; ++i) {
    const T* src = x.data() + i * t * f;
    T* dst = out.data() + i * tp * fp + ph * fp + pw;
    for (int64_t row = 0; row < t; ++row) {
      for (int64_t col = 0; col < f; ++col) dst[col] = src[col];
      src += f;
      dst += fp;
    }
  }
  return out;
}

}  // namespace detail

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const Conv2d<T>& conv) {
  const auto dims = detail::conv_check(x, conv);
  const int64_t B = dims.b, Td = dims.t, Fd = dims.f, To = dims.to, Fo = dims.fo;
  const int64_t tp = Td + 2 * conv.ph, fp = Fd + 2 * conv.pw;
  const int64_t ipg = conv.in_channels / conv.groups;
  const int64_t opg = conv.out_channels / conv.groups;
  const int64_t kh = conv.kh, kw = conv.kw, sh = conv.sh, sw = conv.sw;

  const bool padded = conv.ph != 0 || conv.pw != 0;
  std::vector<T> pad_buf =
      padded ? detail::pad_plane(x.values(), B, dims.c, Td, Fd, conv.ph, conv.pw)
             : std::vector<T>();
  const std::vector<T>& xin = padded ? pad_buf : x.values();

  std::vector<T> out(static_cast<size_t>(B * conv.out_channels * To * Fo));
  const auto& wv = conv.weight.values();
  const auto& bv = conv.bias.values();

  parallel_for(B * conv.out_channels, [&](int64_t begin, int64_t end) {
    for (int64_t bo = begin; bo < end; ++bo) {
      const int64_t batch = bo / conv.out_channels;
      const int64_t oc = bo % conv.out_channels;
      const int64_t g = oc / opg;
      T* outp = out.data() + bo * To * Fo;
      const T bias = bv[static_cast<size_t>(oc)];
      for (int64_t i = 0; i < To * Fo; ++i) outp[i] = bias;
      for (int64_t icg = 0; icg < ipg; ++icg) {
        const int64_t ic = g * ipg + icg;
        const T* inp = xin.data() + (batch * dims.c + ic) * tp * fp;
        const T* wrow = wv.data() + (oc * ipg + icg) * kh * kw;
        for (int64_t dt = 0; dt < kh; ++dt) {
          for (int64_t df = 0; df < kw; ++df) {
            const T w = wrow[dt * kw + df];
            for (int64_t to = 0; to < To; ++to) {
              const T* irow = inp + (to * sh + dt) * fp + df;
              T* orow = outp + to * Fo;
              if (sw == 1) {
                for (int64_t fo = 0; fo < Fo; ++fo) orow[fo] += w * irow[fo];
              } else {
                for (int64_t fo = 0; fo < Fo; ++fo) orow[fo] += w * irow[fo * sw];
              }
            }
          }
        }
      }
    }
  });

  // The closure captures layer geometry by value and reaches tensors through
  // the node, so saving the padded input is the only extra memory.
  auto meta = conv;  // copies the TensorT handles (shared nodes)
  auto saved_pad = std::make_shared<std::vector<T>>(std::move(pad_buf));
  return detail::make_op<T>(
      "conv2d", {B, conv.out_channels, To, Fo}, std::move(out),
      {x, conv.weight, conv.bias},
      [meta, dims, saved_pad](detail::TensorNode<T>& self) {
        const int64_t B = dims.b, Td = dims.t, Fd = dims.f, To = dims.to, Fo = dims.fo;
        const int64_t tp = Td + 2 * meta.ph, fp = Fd + 2 * meta.pw;
        const int64_t ipg = meta.in_channels / meta.groups;
        const int64_t opg = meta.out_channels / meta.groups;
        const int64_t kh = meta.kh, kw = meta.kw, sh = meta.sh, sw = meta.sw;
        const bool padded = meta.ph != 0 || meta.pw != 0;

        auto& px = self.parents[0];
        auto& pw_ = self.parents[1];
        auto& pb = self.parents[2];
        const std::vector<T>& xin = padded ? *saved_pad : px->values;

        if (pb->requires_grad) {
          pb->ensure_grad();
          for (int64_t batch = 0; batch < B; ++batch) {
            for (int64_t oc = 0; oc < meta.out_channels; ++oc) {
              const T* grow = self.grad.data() + (batch * meta.out_channels + oc) * To * Fo;
              double acc = 0.0;
              for (int64_t i = 0; i < To * Fo; ++i) acc += static_cast<double>(grow[i]);
              pb->grad[static_cast<size_t>(oc)] += static_cast<T>(acc);
            }
          }
        }

        if (pw_->requires_grad) {
          pw_->ensure_grad();
          for (int64_t batch = 0; batch < B; ++batch) {
            for (int64_t oc = 0; oc < meta.out_channels; ++oc) {
              const int64_t g = oc / opg;
              const T* grow0 = self.grad.data() + (batch * meta.out_channels + oc) * To * Fo;
              for (int64_t icg = 0; icg < ipg; ++icg) {
                const int64_t ic = g * ipg + icg;
                const T* inp = xin.data() + (batch * dims.c + ic) * tp * fp;
                T* wg = pw_->grad.data() + (oc * ipg + icg) * kh * kw;
                for (int64_t dt = 0; dt < kh; ++dt) {
                  for (int64_t df = 0; df < kw; ++df) {
                    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
                    for (int64_t to = 0; to < To; ++to) {
                      const T* irow = inp + (to * sh + dt) * fp + df;
                      const T* grow = grow0 + to * Fo;
                      int64_t fo = 0;
                      if (sw == 1) {
                        for (; fo + 4 <= Fo; fo += 4) {
                          s0 += static_cast<double>(grow[fo]) * irow[fo];
                          s1 += static_cast<double>(grow[fo + 1]) * irow[fo + 1];
                          s2 += static_cast<double>(grow[fo + 2]) * irow[fo + 2];
                          s3 += static_cast<double>(grow[fo + 3]) * irow[fo + 3];
                        }
                      }
                      for (; fo < Fo; ++fo) {
                        s0 += static_cast<double>(grow[fo]) * irow[fo * sw];
                      }
                    }
                    wg[dt * kw + df] += static_cast<T>((s0 + s1) + (s2 + s3));
                  }
                }
              }
            }
          }
        }

        if (px->requires_grad) {
          px->ensure_grad();
          std::vector<T> dpad;
          T* dx = nullptr;
          if (padded) {
            dpad.assign(static_cast<size_t>(B * dims.c * tp * fp), T(0));
            dx = dpad.data();
          } else {
            dx = px->grad.data();
          }
          for (int64_t batch = 0; batch < B; ++batch) {
            for (int64_t oc = 0; oc < meta.out_channels; ++oc) {
              const int64_t g = oc / opg;
              const T* grow0 = self.grad.data() + (batch * meta.out_channels + oc) * To * Fo;
              for (int64_t icg = 0; icg < ipg; ++icg) {
                const int64_t ic = g * ipg + icg;
                T* dplane = dx + (batch * dims.c + ic) * tp * fp;
                const T* wrow = pw_->values.data() + (oc * ipg + icg) * kh * kw;
                for (int64_t dt = 0; dt < kh; ++dt) {
                  for (int64_t df = 0; df < kw; ++df) {
                    const T w = wrow[dt * kw + df];
                    for (int64_t to = 0; to < To; ++to) {
                      T* drow = dplane + (to * sh + dt) * fp + df;
                      const T* grow = grow0 + to * Fo;
                      if (sw == 1) {
                        for (int64_t fo = 0; fo < Fo; ++fo) drow[fo] += w * grow[fo];
                      } else {
                        for (int64_t fo = 0; fo < Fo; ++fo) drow[fo * sw] += w * grow[fo];
                      }
                    }
                  }
                }
              }
            }
          }
          if (padded) {
            for (int64_t i = 0; i < B * dims.c; ++i) {
              const T* src = dpad.data() + i * tp * fp + meta.ph * fp + meta.pw;
              T* dst = px->grad.data() + i * Td * Fd;
              for (int64_t row = 0; row < Td; ++row) {
                for (int64_t col = 0; col < Fd; ++col) dst[col] += src[col];
                src += fp;
                dst += Fd;
              }
            }
          }
        }
      });
}

// Rearranges [B, C*r^2, T, F] to [B, C, T*r, F*r]. Output position
// (c, r*t + i, r*f + j) takes input channel c*r^2 + i*r + j. Pure permutation,
// so the backward pass is the inverse gather.
template <typename T>
TensorT<T> pixel_shuffle(const TensorT<T>& x, int64_t r = 2) {
  if (x.rank() != 4) {
    throw ShapeError("pixel_shuffle: input must be [B,C,T,F], got " + shape_str(x.shape()));
  }
  if (r <= 0 || x.dim(1) % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: channels " + std::to_string(x.dim(1)) +
                     " not divisible by r^2 with r = " + std::to_string(r));
  }
  const int64_t B = x.dim(0), Ci = x.dim(1), Td = x.dim(2), Fd = x.dim(3);
  const int64_t Co = Ci / (r * r), To = Td * r, Fo = Fd * r;
  std::vector<T> out(static_cast<size_t>(B * Co * To * Fo));
  const auto& xv = x.values();
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t c = 0; c < Co; ++c) {
      for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < r; ++j) {
          const T* src = xv.data() + ((b * Ci + c * r * r + i * r + j) * Td) * Fd;
          for (int64_t t = 0; t < Td; ++t) {
            T* dst = out.data() + ((b * Co + c) * To + t * r + i) * Fo + j;
            for (int64_t f = 0; f < Fd; ++f) dst[f * r] = src[t * Fd + f];
          }
        }
      }
    }
  }
  return detail::make_op<T>(
      "pixel_shuffle", {B, Co, To, Fo}, std::move(out), {x},
      [B, Ci, Td, Fd, Co, To, Fo, r](detail::TensorNode<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (int64_t b = 0; b < B; ++b) {
          for (int64_t c = 0; c < Co; ++c) {
            for (int64_t i = 0; i < r; ++i) {
              for (int64_t j = 0; j < r; ++j) {
                T* dst = p->grad.data() + ((b * Ci + c * r * r + i * r + j) * Td) * Fd;
                for (int64_t t = 0; t < Td; ++t) {
                  const T* src = self.grad.data() + ((b * Co + c) * To + t * r + i) * Fo + j;
                  for (int64_t f = 0; f < Fd; ++f) dst[t * Fd + f] += src[f * r];
                }
              }
            }
          }
        }
      });
}

// Normalizes across channels independently at every (b, t, f) position:
// y = gain * (x - mean_c) / sqrt(var_c + eps) + bias. gain and bias are [C].
template <typename T>
TensorT<T> layer_norm_channel(const TensorT<T>& x, const TensorT<T>& gain, const TensorT<T>& bias,
                              double eps = 1e-6) {
  if (x.rank() != 4) {
    throw ShapeError("layer_norm: input must be [B,C,T,F], got " + shape_str(x.shape()));
  }
  const int64_t B = x.dim(0), C = x.dim(1), Td = x.dim(2), Fd = x.dim(3);
  if (gain.shape() != Shape{C} || bias.shape() != Shape{C}) {
    throw ShapeError("layer_norm: gain " + shape_str(gain.shape()) + " and bias " +
                     shape_str(bias.shape()) + " must both be [" + std::to_string(C) + "]");
  }
  const int64_t A = Td * Fd;
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();

  // x_hat and the per-position inverse stddev are saved for the backward pass.
  auto x_hat = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(B * A));
  std::vector<T> out(xv.size());
  std::vector<double> mean_buf(static_cast<size_t>(A));

  for (int64_t b = 0; b < B; ++b) {
    const T* xb = xv.data() + b * C * A;
    std::fill(mean_buf.begin(), mean_buf.end(), 0.0);
    for (int64_t c = 0; c < C; ++c) {
      const T* row = xb + c * A;
      for (int64_t i = 0; i < A; ++i) mean_buf[static_cast<size_t>(i)] += row[i];
    }
    for (auto& m : mean_buf) m /= static_cast<double>(C);

    T* istd = inv_std->data() + b * A;
    std::vector<double> var_buf(static_cast<size_t>(A), 0.0);
    for (int64_t c = 0; c < C; ++c) {
      const T* row = xb + c * A;
      for (int64_t i = 0; i < A; ++i) {
        const double d = row[i] - mean_buf[static_cast<size_t>(i)];
        var_buf[static_cast<size_t>(i)] += d * d;
      }
    }
    for (int64_t i = 0; i < A; ++i) {
      istd[i] = static_cast<T>(1.0 / std::sqrt(var_buf[static_cast<size_t>(i)] /
                                                   static_cast<double>(C) +
                                               eps));
    }
    for (int64_t c = 0; c < C; ++c) {
      const T* row = xb + c * A;
      T* hat = x_hat->data() + (b * C + c) * A;
      T* o = out.data() + (b * C + c) * A;
      const T g = gv[static_cast<size_t>(c)];
      const T bi = bv[static_cast<size_t>(c)];
      for (int64_t i = 0; i < A; ++i) {
        const T h = static_cast<T>((row[i] - mean_buf[static_cast<size_t>(i)]) * istd[i]);
        hat[i] = h;
        o[i] = g * h + bi;
      }
    }
  }

  return detail::make_op<T>(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [B, C, A, x_hat, inv_std](detail::TensorNode<T>& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];

        if (pg->requires_grad) {
          pg->ensure_grad();
          for (int64_t c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int64_t b = 0; b < B; ++b) {
              const T* g = self.grad.data() + (b * C + c) * A;
              const T* h = x_hat->data() + (b * C + c) * A;
              for (int64_t i = 0; i < A; ++i) acc += static_cast<double>(g[i]) * h[i];
            }
            pg->grad[static_cast<size_t>(c)] += static_cast<T>(acc);
          }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (int64_t c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int64_t b = 0; b < B; ++b) {
              const T* g = self.grad.data() + (b * C + c) * A;
              for (int64_t i = 0; i < A; ++i) acc += static_cast<double>(g[i]);
            }
            pb->grad[static_cast<size_t>(c)] += static_cast<T>(acc);
          }
        }
        if (px->requires_grad) {
          px->ensure_grad();
          // dx = istd * (dyg - mean_c(dyg) - x_hat * mean_c(dyg * x_hat)),
          // with dyg = dy * gain, derived from the whitening Jacobian.
          std::vector<double> m1(static_cast<size_t>(A));
          std::vector<double> m2(static_cast<size_t>(A));
          for (int64_t b = 0; b < B; ++b) {
            std::fill(m1.begin(), m1.end(), 0.0);
            std::fill(m2.begin(), m2.end(), 0.0);
            for (int64_t c = 0; c < C; ++c) {
              const T* g = self.grad.data() + (b * C + c) * A;
              const T* h = x_hat->data() + (b * C + c) * A;
              const double gc = pg->values[static_cast<size_t>(c)];
              for (int64_t i = 0; i < A; ++i) {
                const double dyg = static_cast<double>(g[i]) * gc;
                m1[static_cast<size_t>(i)] += dyg;
                m2[static_cast<size_t>(i)] += dyg * h[i];
              }
            }
            for (int64_t i = 0; i < A; ++i) {
              m1[static_cast<size_t>(i)] /= static_cast<double>(C);
              m2[static_cast<size_t>(i)] /= static_cast<double>(C);
            }
            const T* istd = inv_std->data() + b * A;
            for (int64_t c = 0; c < C; ++c) {
              const T* g = self.grad.data() + (b * C + c) * A;
              const T* h = x_hat->data() + (b * C + c) * A;
              T* dx = px->grad.data() + (b * C + c) * A;
              const double gc = pg->values[static_cast<size_t>(c)];
              for (int64_t i = 0; i < A; ++i) {
                const double dyg = static_cast<double>(g[i]) * gc;
                dx[i] += static_cast<T>(istd[i] * (dyg - m1[static_cast<size_t>(i)] -
                                                   h[i] * m2[static_cast<size_t>(i)]));
              }
            }
          }
        }
      });
}

// Splits channels in half and multiplies the halves. The only nonlinearity in
// the network besides the optional output sigmoid.
template <typename T>
TensorT<T> simple_gate(const TensorT<T>& x) {
  if (x.rank() != 4 || x.dim(1) % 2 != 0) {
    throw ShapeError("simple_gate: input must be [B,2C,T,F], got " + shape_str(x.shape()));
  }
  const int64_t B = x.dim(0), C2 = x.dim(1), Td = x.dim(2), Fd = x.dim(3);
  const int64_t C = C2 / 2, A = Td * Fd;
  const auto& xv = x.values();
  std::vector<T> out(static_cast<size_t>(B * C * A));
  for (int64_t b = 0; b < B; ++b) {
    const T* first = xv.data() + b * C2 * A;
    const T* second = first + C * A;
    T* o = out.data() + b * C * A;
    for (int64_t i = 0; i < C * A; ++i) o[i] = first[i] * second[i];
  }
  return detail::make_op<T>("simple_gate", {B, C, Td, Fd}, std::move(out), {x},
                            [B, C2, C, A](detail::TensorNode<T>& self) {
                              auto& p = self.parents[0];
                              p->ensure_grad();
                              for (int64_t b = 0; b < B; ++b) {
                                const T* first = p->values.data() + b * C2 * A;
                                const T* second = first + C * A;
                                T* dfirst = p->grad.data() + b * C2 * A;
                                T* dsecond = dfirst + C * A;
                                const T* g = self.grad.data() + b * C * A;
                                for (int64_t i = 0; i < C * A; ++i) {
                                  dfirst[i] += g[i] * second[i];
                                  dsecond[i] += g[i] * first[i];
                                }
                              }
                            });
}

// [B,C,T,F] -> [B,C,1,1] spatial mean per channel.
template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x) {
  if (x.rank() != 4) {
    throw ShapeError("global_avg_pool: input must be [B,C,T,F], got " + shape_str(x.shape()));
  }
  const int64_t B = x.dim(0), C = x.dim(1), A = x.dim(2) * x.dim(3);
  const auto& xv = x.values();
  std::vector<T> out(static_cast<size_t>(B * C));
  for (int64_t i = 0; i < B * C; ++i) {
    const T* row = xv.data() + i * A;
    double acc = 0.0;
    for (int64_t j = 0; j < A; ++j) acc += static_cast<double>(row[j]);
    out[static_cast<size_t>(i)] = static_cast<T>(acc / static_cast<double>(A));
  }
  return detail::make_op<T>("global_avg_pool", {B, C, 1, 1}, std::move(out), {x},
                            [B, C, A](detail::TensorNode<T>& self) {
                              auto& p = self.parents[0];
                              p->ensure_grad();
                              for (int64_t i = 0; i < B * C; ++i) {
                                const T g = self.grad[static_cast<size_t>(i)] / static_cast<T>(A);
                                T* row = p->grad.data() + i * A;
                                for (int64_t j = 0; j < A; ++j) row[j] += g;
                              }
                            });
}

// Multiplies each channel plane of x [B,C,T,F] by the matching scalar from
// a [B,C,1,1] tensor.
template <typename T>
TensorT<T> channel_scale(const TensorT<T>& x, const TensorT<T>& a) {
  if (x.rank() != 4 || a.rank() != 4 || a.dim(0) != x.dim(0) || a.dim(1) != x.dim(1) ||
      a.dim(2) != 1 || a.dim(3) != 1) {
    throw ShapeError("channel_scale: need x [B,C,T,F] and scale [B,C,1,1], got " +
                     shape_str(x.shape()) + " and " + shape_str(a.shape()));
  }
  const int64_t B = x.dim(0), C = x.dim(1), A = x.dim(2) * x.dim(3);
  const auto& xv = x.values();
  const auto& av = a.values();
  std::vector<T> out(xv.size());
  for (int64_t i = 0; i < B * C; ++i) {
    const T s = av[static_cast<size_t>(i)];
    const T* row = xv.data() + i * A;
    T* o = out.data() + i * A;
    for (int64_t j = 0; j < A; ++j) o[j] = s * row[j];
  }
  return detail::make_op<T>(
      "channel_scale", x.shape(), std::move(out), {x, a},
      [B, C, A](detail::TensorNode<T>& self) {
        auto& px = self.parents[0];
        auto& pa = self.parents[1];
        if (px->requires_grad) {
          px->ensure_grad();
          for (int64_t i = 0; i < B * C; ++i) {
            const T s = pa->values[static_cast<size_t>(i)];
            const T* g = self.grad.data() + i * A;
            T* dx = px->grad.data() + i * A;
            for (int64_t j = 0; j < A; ++j) dx[j] += s * g[j];
          }
        }
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (int64_t i = 0; i < B * C; ++i) {
            const T* g = self.grad.data() + i * A;
            const T* row = px->values.data() + i * A;
            double acc = 0.0;
            for (int64_t j = 0; j < A; ++j) acc += static_cast<double>(g[j]) * row[j];
            pa->grad[static_cast<size_t>(i)] += static_cast<T>(acc);
          }
        }
      });
}

// Appends zero frames on the time axis of [B,C,T,F] until T = new_t.
template <typename T>
TensorT<T> pad_time(const TensorT<T>& x, int64_t new_t) {
  if (x.rank() != 4) {
    throw ShapeError("pad_time: input must be [B,C,T,F], got " + shape_str(x.shape()));
  }
  const int64_t B = x.dim(0), C = x.dim(1), Td = x.dim(2), Fd = x.dim(3);
  if (new_t < Td) {
    throw ShapeError("pad_time: target " + std::to_string(new_t) + " < current " +
                     std::to_string(Td));
  }
  if (new_t == Td) return x;
  std::vector<T> out(static_cast<size_t>(B * C * new_t * Fd), T(0));
  const auto& xv = x.values();
  for (int64_t i = 0; i < B * C; ++i) {
    std::copy(xv.begin() + i * Td * Fd, xv.begin() + (i + 1) * Td * Fd,
              out.begin() + i * new_t * Fd);
  }
  return detail::make_op<T>("pad_time", {B, C, new_t, Fd}, std::move(out), {x},
                            [B, C, Td, Fd, new_t](detail::TensorNode<T>& self) {
                              auto& p = self.parents[0];
                              p->ensure_grad();
                              for (int64_t i = 0; i < B * C; ++i) {
                                const T* g = self.grad.data() + i * new_t * Fd;
                                T* dst = p->grad.data() + i * Td * Fd;
                                for (int64_t j = 0; j < Td * Fd; ++j) dst[j] += g[j];
                              }
                            });
}

// Keeps the first new_t frames of the time axis.
template <typename T>
TensorT<T> crop_time(const TensorT<T>& x, int64_t new_t) {
  if (x.rank() != 4) {
    throw ShapeError("crop_time: input must be [B,C,T,F], got " + shape_str(x.shape()));
  }
  const int64_t B = x.dim(0), C = x.dim(1), Td = x.dim(2), Fd = x.dim(3);
  if (new_t > Td || new_t <= 0) {
    throw ShapeError("crop_time: target " + std::to_string(new_t) + " out of range for T = " +
                     std::to_string(Td));
  }
  if (new_t == Td) return x;
  std::vector<T> out(static_cast<size_t>(B * C * new_t * Fd));
  const auto& xv = x.values();
  for (int64_t i = 0; i < B * C; ++i) {
    std::copy(xv.begin() + i * Td * Fd, xv.begin() + i * Td * Fd + new_t * Fd,
              out.begin() + i * new_t * Fd);
  }
  return detail::make_op<T>("crop_time", {B, C, new_t, Fd}, std::move(out), {x},
                            [B, C, Td, Fd, new_t](detail::TensorNode<T>& self) {
                              auto& p = self.parents[0];
                              p->ensure_grad();
                              for (int64_t i = 0; i < B * C; ++i) {
                                const T* g = self.grad.data() + i * new_t * Fd;
                                T* dst = p->grad.data() + i * Td * Fd;
                                for (int64_t j = 0; j < new_t * Fd; ++j) dst[j] += g[j];
                              }
                            });
}

// Squeeze-style channel attention without nonlinearity: pool, 1x1 conv, scale.
template <typename T>
TensorT<T> channel_attention(const TensorT<T>& x, const Conv2d<T>& proj) {
  return channel_scale(x, conv2d(global_avg_pool(x), proj));
}

}  // namespace mfnet
