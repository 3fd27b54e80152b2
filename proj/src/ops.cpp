#include "blindsnf/ops.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "blindsnf/rearrange.hpp"

namespace blindsnf {

namespace {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using MatMap = Eigen::Map<RowMatrix<Scalar>>;
template <typename Scalar>
using ConstMatMap = Eigen::Map<const RowMatrix<Scalar>>;

template <typename Scalar>
using NodePtr = typename Var<Scalar>::NodePtr;

// Grad buffer of `node` if it wants a gradient, else nullptr.
template <typename Scalar>
Tensor<Scalar>* sink(const NodePtr<Scalar>& node) {
  return node->requires_grad ? &node->grad_buffer() : nullptr;
}

template <typename Scalar>
void require_rank4(const Var<Scalar>& x, const char* what) {
  if (x.value().rank() != 4) {
    throw DimensionError(std::string(what) + ": expected (N,C,H,W), got " + shape_string(x.shape()));
  }
}

template <typename Scalar>
void im2col(const Scalar* image, Index channels, Index height, Index width, Index kernel, Index stride,
            Index padding, Index out_h, Index out_w, RowMatrix<Scalar>& col) {
  col.resize(channels * kernel * kernel, out_h * out_w);
  for (Index c = 0; c < channels; ++c)
    for (Index ki = 0; ki < kernel; ++ki)
      for (Index kj = 0; kj < kernel; ++kj) {
        Scalar* row = col.data() + ((c * kernel + ki) * kernel + kj) * out_h * out_w;
        const Scalar* plane = image + c * height * width;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * stride - padding + ki;
          Scalar* dst = row + oy * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(dst, dst + out_w, Scalar(0));
            continue;
          }
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index ix = ox * stride - padding + kj;
            dst[ox] = (ix >= 0 && ix < width) ? plane[iy * width + ix] : Scalar(0);
          }
        }
      }
}

template <typename Scalar>
void col2im_add(const RowMatrix<Scalar>& col, Index channels, Index height, Index width, Index kernel,
                Index stride, Index padding, Index out_h, Index out_w, Scalar* image) {
  for (Index c = 0; c < channels; ++c)
    for (Index ki = 0; ki < kernel; ++ki)
      for (Index kj = 0; kj < kernel; ++kj) {
        const Scalar* row = col.data() + ((c * kernel + ki) * kernel + kj) * out_h * out_w;
        Scalar* plane = image + c * height * width;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * stride - padding + ki;
          if (iy < 0 || iy >= height) continue;
          const Scalar* src = row + oy * out_w;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index ix = ox * stride - padding + kj;
            if (ix >= 0 && ix < width) plane[iy * width + ix] += src[ox];
          }
        }
      }
}

}  // namespace

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor<Scalar> out(a.shape(), a.value().values() + b.value().values());
  auto na = a.node(), nb = b.node();
  return make_op(std::move(out), {a, b}, [na, nb](const Tensor<Scalar>& g) {
    if (auto* s = sink<Scalar>(na)) s->values() += g.values();
    if (auto* s = sink<Scalar>(nb)) s->values() += g.values();
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor<Scalar> out(a.shape(), a.value().values() - b.value().values());
  auto na = a.node(), nb = b.node();
  return make_op(std::move(out), {a, b}, [na, nb](const Tensor<Scalar>& g) {
    if (auto* s = sink<Scalar>(na)) s->values() += g.values();
    if (auto* s = sink<Scalar>(nb)) s->values() -= g.values();
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor<Scalar> out(a.shape(), a.value().values() * b.value().values());
  auto na = a.node(), nb = b.node();
  return make_op(std::move(out), {a, b}, [na, nb](const Tensor<Scalar>& g) {
    if (auto* s = sink<Scalar>(na)) s->values() += g.values() * nb->value.values();
    if (auto* s = sink<Scalar>(nb)) s->values() += g.values() * na->value.values();
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar factor) {
  Tensor<Scalar> out(a.shape(), a.value().values() * factor);
  auto na = a.node();
  return make_op(std::move(out), {a}, [na, factor](const Tensor<Scalar>& g) {
    if (auto* s = sink<Scalar>(na)) s->values() += g.values() * factor;
  });
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& a, Shape shape) {
  auto na = a.node();
  return make_op(a.value().reshaped(std::move(shape)), {a}, [na](const Tensor<Scalar>& g) {
    if (auto* s = sink<Scalar>(na)) s->values() += g.values();
  });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  Tensor<Scalar> out(Shape{1}, a.value().values().sum());
  auto na = a.node();
  return make_op(std::move(out), {a}, [na](const Tensor<Scalar>& g) {
    if (auto* s = sink<Scalar>(na)) s->values() += g[0];
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a) {
  const Scalar inv = Scalar(1) / static_cast<Scalar>(a.size());
  Tensor<Scalar> out(Shape{1}, a.value().values().sum() * inv);
  auto na = a.node();
  return make_op(std::move(out), {a}, [na, inv](const Tensor<Scalar>& g) {
    if (auto* s = sink<Scalar>(na)) s->values() += g[0] * inv;
  });
}

template <typename Scalar>
Var<Scalar> mean_abs(const Var<Scalar>& a) {
  const Scalar inv = Scalar(1) / static_cast<Scalar>(a.size());
  Tensor<Scalar> out(Shape{1}, a.value().values().abs().sum() * inv);
  auto na = a.node();
  return make_op(std::move(out), {a}, [na, inv](const Tensor<Scalar>& g) {
    if (auto* s = sink<Scalar>(na)) s->values() += na->value.values().sign() * (g[0] * inv);
  });
}

template <typename Scalar>
Var<Scalar> silu(const Var<Scalar>& a) {
  const auto& x = a.value().values();
  typename Tensor<Scalar>::Array sig = (Scalar(1) + (-x).exp()).inverse();
  Tensor<Scalar> out(a.shape(), x * sig);
  auto na = a.node();
  return make_op(std::move(out), {a}, [na, sig = std::move(sig)](const Tensor<Scalar>& g) {
    if (auto* s = sink<Scalar>(na)) {
      const auto& xv = na->value.values();
      s->values() += g.values() * sig * (Scalar(1) + xv * (Scalar(1) - sig));
    }
  });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& a, Scalar slope) {
  const auto& x = a.value().values();
  Tensor<Scalar> out(a.shape(), (x > Scalar(0)).select(x, x * slope));
  auto na = a.node();
  return make_op(std::move(out), {a}, [na, slope](const Tensor<Scalar>& g) {
    if (auto* s = sink<Scalar>(na)) {
      s->values() += (na->value.values() > Scalar(0)).select(g.values(), g.values() * slope);
    }
  });
}

template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias) {
  if (x.value().rank() != 2 || weight.value().rank() != 2 || x.dim(1) != weight.dim(1)) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " incompatible with weight " +
                         shape_string(weight.shape()));
  }
  const Index n = x.dim(0), out_dim = weight.dim(0);
  Tensor<Scalar> out(Shape{n, out_dim});
  out.matrix().noalias() = x.value().matrix() * weight.value().matrix().transpose();
  const bool has_bias = bias.defined();
  if (has_bias) {
    if (bias.size() != out_dim) throw DimensionError("linear: bias size mismatch");
    out.matrix().rowwise() += bias.value().values().matrix().transpose();
  }
  auto nx = x.node(), nw = weight.node();
  auto nb = has_bias ? bias.node() : nullptr;
  auto backward_fn = [nx, nw, nb](const Tensor<Scalar>& g) {
    const auto gm = g.matrix();
    if (auto* s = sink<Scalar>(nx)) s->matrix().noalias() += gm * nw->value.matrix();
    if (auto* s = sink<Scalar>(nw)) s->matrix().noalias() += gm.transpose() * nx->value.matrix();
    if (nb) {
      if (auto* s = sink<Scalar>(nb)) s->values() += gm.colwise().sum().transpose().array();
    }
  };
  if (has_bias) return make_op(std::move(out), {x, weight, bias}, std::move(backward_fn));
  return make_op(std::move(out), {x, weight}, std::move(backward_fn));
}

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, Index stride,
                   Index padding) {
  require_rank4(x, "conv2d");
  const auto& w = weight.value();
  if (w.rank() != 4 || w.dim(1) != x.dim(1) || w.dim(2) != w.dim(3)) {
    throw DimensionError("conv2d: weight " + shape_string(w.shape()) + " incompatible with input " +
                         shape_string(x.shape()));
  }
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index out_c = w.dim(0), k = w.dim(2);
  const Index out_h = (h + 2 * padding - k) / stride + 1;
  const Index out_w = (wd + 2 * padding - k) / stride + 1;
  if (out_h <= 0 || out_w <= 0) throw DimensionError("conv2d: input smaller than kernel");
  const bool pointwise = (k == 1 && stride == 1 && padding == 0);
  const bool has_bias = bias.defined();

  Tensor<Scalar> out(Shape{n, out_c, out_h, out_w});
  const ConstMatMap<Scalar> wmat(w.data(), out_c, c * k * k);
  RowMatrix<Scalar> col;
  for (Index b = 0; b < n; ++b) {
    MatMap<Scalar> dst(out.data() + b * out_c * out_h * out_w, out_c, out_h * out_w);
    const Scalar* src = x.value().data() + b * c * h * wd;
    if (pointwise) {
      dst.noalias() = wmat * ConstMatMap<Scalar>(src, c, h * wd);
    } else {
      im2col(src, c, h, wd, k, stride, padding, out_h, out_w, col);
      dst.noalias() = wmat * col;
    }
    if (has_bias) dst.colwise() += bias.value().values().matrix();
  }

  auto nx = x.node(), nw = weight.node();
  auto nb = has_bias ? bias.node() : nullptr;
  auto backward_fn = [=](const Tensor<Scalar>& g) {
    auto* sx = sink<Scalar>(nx);
    auto* sw = sink<Scalar>(nw);
    auto* sb = nb ? sink<Scalar>(nb) : nullptr;
    const ConstMatMap<Scalar> wm(nw->value.data(), out_c, c * k * k);
    RowMatrix<Scalar> cols, dcol;
    for (Index b = 0; b < n; ++b) {
      const ConstMatMap<Scalar> gb(g.data() + b * out_c * out_h * out_w, out_c, out_h * out_w);
      const Scalar* src = nx->value.data() + b * c * h * wd;
      if (sb) sb->values().matrix() += gb.rowwise().sum();
      if (pointwise) {
        if (sw) MatMap<Scalar>(sw->data(), out_c, c).noalias() += gb * ConstMatMap<Scalar>(src, c, h * wd).transpose();
        if (sx) MatMap<Scalar>(sx->data() + b * c * h * wd, c, h * wd).noalias() += wm.transpose() * gb;
        continue;
      }
      if (sw) {
        im2col(src, c, h, wd, k, stride, padding, out_h, out_w, cols);
        MatMap<Scalar>(sw->data(), out_c, c * k * k).noalias() += gb * cols.transpose();
      }
      if (sx) {
        dcol.noalias() = wm.transpose() * gb;
        col2im_add(dcol, c, h, wd, k, stride, padding, out_h, out_w, sx->data() + b * c * h * wd);
      }
    }
  };
  if (has_bias) return make_op(std::move(out), {x, weight, bias}, std::move(backward_fn));
  return make_op(std::move(out), {x, weight}, std::move(backward_fn));
}

template <typename Scalar>
Var<Scalar> depthwise_conv3x3(const Var<Scalar>& x, const Var<Scalar>& kernels) {
  require_rank4(x, "depthwise_conv3x3");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (kernels.value().rank() != 2 || kernels.dim(0) != n || kernels.dim(1) != c * 9) {
    throw DimensionError("depthwise_conv3x3: kernels " + shape_string(kernels.shape()) + " do not match input " +
                         shape_string(x.shape()));
  }
  Tensor<Scalar> out(x.shape());
  const auto& xv = x.value();
  const auto& kv = kernels.value();
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch) {
      const Scalar* taps = kv.data() + (b * c + ch) * 9;
      const Scalar* plane = xv.data() + (b * c + ch) * h * w;
      Scalar* dst = out.data() + (b * c + ch) * h * w;
      for (Index dy = 0; dy < 3; ++dy)
        for (Index dx = 0; dx < 3; ++dx) {
          const Scalar tap = taps[dy * 3 + dx];
          for (Index y = 0; y < h; ++y) {
            const Index iy = y + dy - 1;
            if (iy < 0 || iy >= h) continue;
            for (Index xx = 0; xx < w; ++xx) {
              const Index ix = xx + dx - 1;
              if (ix >= 0 && ix < w) dst[y * w + xx] += tap * plane[iy * w + ix];
            }
          }
        }
    }
  auto nx = x.node(), nk = kernels.node();
  return make_op(std::move(out), {x, kernels}, [=](const Tensor<Scalar>& g) {
    auto* sx = sink<Scalar>(nx);
    auto* sk = sink<Scalar>(nk);
    for (Index b = 0; b < n; ++b)
      for (Index ch = 0; ch < c; ++ch) {
        const Scalar* taps = nk->value.data() + (b * c + ch) * 9;
        const Scalar* plane = nx->value.data() + (b * c + ch) * h * w;
        const Scalar* gp = g.data() + (b * c + ch) * h * w;
        for (Index dy = 0; dy < 3; ++dy)
          for (Index dx = 0; dx < 3; ++dx) {
            Scalar tap_grad = 0;
            const Scalar tap = taps[dy * 3 + dx];
            for (Index y = 0; y < h; ++y) {
              const Index iy = y + dy - 1;
              if (iy < 0 || iy >= h) continue;
              for (Index xx = 0; xx < w; ++xx) {
                const Index ix = xx + dx - 1;
                if (ix < 0 || ix >= w) continue;
                tap_grad += gp[y * w + xx] * plane[iy * w + ix];
                if (sx) sx->data()[(b * c + ch) * h * w + iy * w + ix] += tap * gp[y * w + xx];
              }
            }
            if (sk) sk->data()[(b * c + ch) * 9 + dy * 3 + dx] += tap_grad;
          }
      }
  });
}

template <typename Scalar>
Var<Scalar> group_norm(const Var<Scalar>& x, Index groups, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       Scalar eps) {
  require_rank4(x, "group_norm");
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (groups <= 0 || c % groups != 0) {
    throw DimensionError("group_norm: " + std::to_string(c) + " channels not divisible into " +
                         std::to_string(groups) + " groups");
  }
  if (gamma.size() != c || beta.size() != c) throw DimensionError("group_norm: affine size mismatch");
  const Index per_group = c / groups;
  const Index count = per_group * hw;

  Tensor<Scalar> normalized(x.shape());
  Tensor<Scalar> inv_std(Shape{n * groups});
  Tensor<Scalar> out(x.shape());
  for (Index b = 0; b < n; ++b)
    for (Index gi = 0; gi < groups; ++gi) {
      const Index offset = (b * c + gi * per_group) * hw;
      const auto seg = x.value().values().segment(offset, count).template cast<double>();
      const double mu = seg.mean();
      const double var = (seg - mu).square().mean();
      const double istd = 1.0 / std::sqrt(var + static_cast<double>(eps));
      inv_std[b * groups + gi] = static_cast<Scalar>(istd);
      normalized.values().segment(offset, count) = ((seg - mu) * istd).template cast<Scalar>();
      for (Index k = 0; k < per_group; ++k) {
        const Index ch = gi * per_group + k;
        out.values().segment(offset + k * hw, hw) =
            normalized.values().segment(offset + k * hw, hw) * gamma.value()[ch] + beta.value()[ch];
      }
    }

  auto nx = x.node(), ng = gamma.node(), nb = beta.node();
  return make_op(std::move(out), {x, gamma, beta},
                 [=, normalized = std::move(normalized), inv_std = std::move(inv_std)](const Tensor<Scalar>& g) {
                   auto* sx = sink<Scalar>(nx);
                   auto* sg = sink<Scalar>(ng);
                   auto* sb = sink<Scalar>(nb);
                   typename Tensor<Scalar>::Array dnorm(count);
                   for (Index b = 0; b < n; ++b)
                     for (Index gi = 0; gi < groups; ++gi) {
                       const Index offset = (b * c + gi * per_group) * hw;
                       const auto xhat = normalized.values().segment(offset, count);
                       const auto gseg = g.values().segment(offset, count);
                       for (Index k = 0; k < per_group; ++k) {
                         const Index ch = gi * per_group + k;
                         const auto gs = gseg.segment(k * hw, hw);
                         if (sg) (*sg)[ch] += (gs * xhat.segment(k * hw, hw)).sum();
                         if (sb) (*sb)[ch] += gs.sum();
                         dnorm.segment(k * hw, hw) = gs * ng->value[ch];
                       }
                       if (sx) {
                         const Scalar m1 = dnorm.mean();
                         const Scalar m2 = (dnorm * xhat).mean();
                         sx->values().segment(offset, count) +=
                             (dnorm - m1 - xhat * m2) * inv_std[b * groups + gi];
                       }
                     }
                 });
}

template <typename Scalar>
Var<Scalar> batch_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       Tensor<Scalar>& running_mean, Tensor<Scalar>& running_var, bool training, Scalar momentum,
                       Scalar eps) {
  require_rank4(x, "batch_norm");
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c || running_var.size() != c) {
    throw DimensionError("batch_norm: parameter size mismatch");
  }
  const Index count = n * hw;
  if (training && count < 2) throw DimensionError("batch_norm: training needs more than one value per channel");

  Tensor<Scalar> normalized(x.shape());
  Tensor<Scalar> inv_std(Shape{c});
  Tensor<Scalar> out(x.shape());
  const auto& xv = x.value().values();
  for (Index ch = 0; ch < c; ++ch) {
    double mu = 0.0, var = 0.0;
    if (training) {
      for (Index b = 0; b < n; ++b) mu += xv.segment((b * c + ch) * hw, hw).template cast<double>().sum();
      mu /= static_cast<double>(count);
      for (Index b = 0; b < n; ++b)
        var += (xv.segment((b * c + ch) * hw, hw).template cast<double>() - mu).square().sum();
      var /= static_cast<double>(count);
      running_mean[ch] = static_cast<Scalar>((1.0 - momentum) * running_mean[ch] + momentum * mu);
      running_var[ch] = static_cast<Scalar>((1.0 - momentum) * running_var[ch] +
                                            momentum * var * static_cast<double>(count) / (count - 1));
    } else {
      mu = running_mean[ch];
      var = running_var[ch];
    }
    const double istd = 1.0 / std::sqrt(var + static_cast<double>(eps));
    inv_std[ch] = static_cast<Scalar>(istd);
    for (Index b = 0; b < n; ++b) {
      const Index offset = (b * c + ch) * hw;
      normalized.values().segment(offset, hw) =
          ((xv.segment(offset, hw).template cast<double>() - mu) * istd).template cast<Scalar>();
      out.values().segment(offset, hw) =
          normalized.values().segment(offset, hw) * gamma.value()[ch] + beta.value()[ch];
    }
  }

  auto nx = x.node(), ng = gamma.node(), nb = beta.node();
  return make_op(
      std::move(out), {x, gamma, beta},
      [=, normalized = std::move(normalized), inv_std = std::move(inv_std)](const Tensor<Scalar>& g) {
        auto* sx = sink<Scalar>(nx);
        auto* sg = sink<Scalar>(ng);
        auto* sb = sink<Scalar>(nb);
        for (Index ch = 0; ch < c; ++ch) {
          Scalar gsum = 0, gxsum = 0;
          for (Index b = 0; b < n; ++b) {
            const Index offset = (b * c + ch) * hw;
            gsum += g.values().segment(offset, hw).sum();
            gxsum += (g.values().segment(offset, hw) * normalized.values().segment(offset, hw)).sum();
          }
          if (sg) (*sg)[ch] += gxsum;
          if (sb) (*sb)[ch] += gsum;
          if (!sx) continue;
          const Scalar scale_factor = ng->value[ch] * inv_std[ch];
          for (Index b = 0; b < n; ++b) {
            const Index offset = (b * c + ch) * hw;
            if (training) {
              const Scalar m1 = gsum / static_cast<Scalar>(count);
              const Scalar m2 = gxsum / static_cast<Scalar>(count);
              sx->values().segment(offset, hw) +=
                  (g.values().segment(offset, hw) - m1 - normalized.values().segment(offset, hw) * m2) *
                  scale_factor;
            } else {
              sx->values().segment(offset, hw) += g.values().segment(offset, hw) * scale_factor;
            }
          }
        }
      });
}

template <typename Scalar>
Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_rank4(a, "concat_channels");
  require_rank4(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  const Index n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor<Scalar> out(Shape{n, ca + cb, a.dim(2), a.dim(3)});
  for (Index i = 0; i < n; ++i) {
    out.values().segment(i * (ca + cb) * hw, ca * hw) = a.value().values().segment(i * ca * hw, ca * hw);
    out.values().segment((i * (ca + cb) + ca) * hw, cb * hw) = b.value().values().segment(i * cb * hw, cb * hw);
  }
  auto na = a.node(), nb = b.node();
  return make_op(std::move(out), {a, b}, [=](const Tensor<Scalar>& g) {
    auto* sa = sink<Scalar>(na);
    auto* sb = sink<Scalar>(nb);
    for (Index i = 0; i < n; ++i) {
      if (sa) sa->values().segment(i * ca * hw, ca * hw) += g.values().segment(i * (ca + cb) * hw, ca * hw);
      if (sb) sb->values().segment(i * cb * hw, cb * hw) += g.values().segment((i * (ca + cb) + ca) * hw, cb * hw);
    }
  });
}

template <typename Scalar>
Var<Scalar> slice_batch(const Var<Scalar>& x, Index begin, Index count) {
  if (begin < 0 || count <= 0 || begin + count > x.dim(0)) throw DimensionError("slice_batch: range out of bounds");
  const Index stride = x.size() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = count;
  Tensor<Scalar> out(shape, x.value().values().segment(begin * stride, count * stride));
  auto nx = x.node();
  return make_op(std::move(out), {x}, [=](const Tensor<Scalar>& g) {
    if (auto* s = sink<Scalar>(nx)) s->values().segment(begin * stride, count * stride) += g.values();
  });
}

template <typename Scalar>
Var<Scalar> resize_nearest(const Var<Scalar>& x, Index out_h, Index out_w) {
  require_rank4(x, "resize_nearest");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (out_h <= 0 || out_w <= 0) throw DimensionError("resize_nearest: non-positive output size");
  std::vector<Index> src_index(static_cast<std::size_t>(out_h * out_w));
  for (Index y = 0; y < out_h; ++y)
    for (Index xx = 0; xx < out_w; ++xx) src_index[y * out_w + xx] = (y * h / out_h) * w + (xx * w / out_w);
  Tensor<Scalar> out(Shape{n, c, out_h, out_w});
  for (Index p = 0; p < n * c; ++p)
    for (Index i = 0; i < out_h * out_w; ++i) out[p * out_h * out_w + i] = x.value()[p * h * w + src_index[i]];
  auto nx = x.node();
  return make_op(std::move(out), {x}, [=, src_index = std::move(src_index)](const Tensor<Scalar>& g) {
    if (auto* s = sink<Scalar>(nx)) {
      for (Index p = 0; p < n * c; ++p)
        for (Index i = 0; i < out_h * out_w; ++i) (*s)[p * h * w + src_index[i]] += g[p * out_h * out_w + i];
    }
  });
}

template <typename Scalar>
Var<Scalar> add_channel_bias(const Var<Scalar>& x, const Var<Scalar>& bias) {
  require_rank4(x, "add_channel_bias");
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (bias.value().rank() != 2 || bias.dim(0) != n || bias.dim(1) != c) {
    throw DimensionError("add_channel_bias: bias " + shape_string(bias.shape()) + " vs input " +
                         shape_string(x.shape()));
  }
  Tensor<Scalar> out = x.value();
  for (Index p = 0; p < n * c; ++p) out.values().segment(p * hw, hw) += bias.value()[p];
  auto nx = x.node(), nb = bias.node();
  return make_op(std::move(out), {x, bias}, [=](const Tensor<Scalar>& g) {
    if (auto* s = sink<Scalar>(nx)) s->values() += g.values();
    if (auto* s = sink<Scalar>(nb)) {
      for (Index p = 0; p < n * c; ++p) (*s)[p] += g.values().segment(p * hw, hw).sum();
    }
  });
}

template <typename Scalar>
Var<Scalar> global_avg_pool(const Var<Scalar>& x) {
  require_rank4(x, "global_avg_pool");
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<Scalar> out(Shape{n, c});
  for (Index p = 0; p < n * c; ++p) out[p] = x.value().values().segment(p * hw, hw).mean();
  auto nx = x.node();
  return make_op(std::move(out), {x}, [=](const Tensor<Scalar>& g) {
    if (auto* s = sink<Scalar>(nx)) {
      for (Index p = 0; p < n * c; ++p) s->values().segment(p * hw, hw) += g[p] / static_cast<Scalar>(hw);
    }
  });
}

template <typename Scalar>
Var<Scalar> l2_normalize_rows(const Var<Scalar>& x, Scalar eps) {
  if (x.value().rank() != 2) throw DimensionError("l2_normalize_rows: expected (N,D)");
  const Index n = x.dim(0);
  Tensor<Scalar> norms(Shape{n});
  Tensor<Scalar> out(x.shape());
  for (Index i = 0; i < n; ++i) {
    const Scalar norm = std::max(x.value().matrix().row(i).norm(), eps);
    norms[i] = norm;
    out.matrix().row(i) = x.value().matrix().row(i) / norm;
  }
  auto nx = x.node();
  Tensor<Scalar> y = out;
  return make_op(std::move(out), {x}, [=, norms = std::move(norms), y = std::move(y)](const Tensor<Scalar>& g) {
    if (auto* s = sink<Scalar>(nx)) {
      for (Index i = 0; i < n; ++i) {
        const auto yi = y.matrix().row(i);
        const auto gi = g.matrix().row(i);
        if (nx->value.matrix().row(i).norm() > eps) {
          s->matrix().row(i) += (gi - yi * yi.dot(gi)) / norms[i];
        } else {
          s->matrix().row(i) += gi / norms[i];
        }
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> space_to_depth(const Var<Scalar>& x, Index factor) {
  auto nx = x.node();
  return make_op(space_to_depth(x.value(), factor), {x}, [=](const Tensor<Scalar>& g) {
    if (auto* s = sink<Scalar>(nx)) s->values() += depth_to_space(g, factor).values();
  });
}

template <typename Scalar>
Var<Scalar> depth_to_space(const Var<Scalar>& x, Index factor) {
  auto nx = x.node();
  return make_op(depth_to_space(x.value(), factor), {x}, [=](const Tensor<Scalar>& g) {
    if (auto* s = sink<Scalar>(nx)) s->values() += space_to_depth(g, factor).values();
  });
}

template <typename Scalar>
Var<Scalar> contrastive_loss(const Var<Scalar>& w, const Var<Scalar>& w_pos, const Tensor<Scalar>& negatives,
                             Scalar temperature, bool include_positive) {
  if (w.value().rank() != 2) throw DimensionError("contrastive_loss: expected (N,D) query");
  require_same_shape(w.value(), w_pos.value(), "contrastive_loss");
  if (negatives.empty()) throw StateError("contrastive_loss: negative queue is empty");
  if (negatives.rank() != 2 || negatives.dim(1) != w.dim(1)) {
    throw DimensionError("contrastive_loss: negatives " + shape_string(negatives.shape()) + " vs query " +
                         shape_string(w.shape()));
  }
  if (!(temperature > Scalar(0))) throw ParameterError("contrastive_loss: temperature must be positive");
  const Index n = w.dim(0), k = negatives.dim(0);
  const auto wm = w.value().matrix();
  const auto pm = w_pos.value().matrix();
  const auto qm = negatives.matrix();

  // logits(i, j): j < k negatives, j == k positive (when included)
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> prob(n, k + 1);
  Scalar total = 0;
  for (Index i = 0; i < n; ++i) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> logits(k + 1);
    logits.head(k) = qm * wm.row(i).transpose() / temperature;
    const Scalar pos = wm.row(i).dot(pm.row(i)) / temperature;
    logits[k] = pos;
    const Index terms = include_positive ? k + 1 : k;
    const Scalar top = logits.head(terms).maxCoeff();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e = (logits.head(terms).array() - top).exp().matrix();
    const Scalar z = e.sum();
    total += -pos + top + std::log(z);
    prob.row(i).setZero();
    prob.row(i).head(terms) = (e / z).transpose();
  }
  Tensor<Scalar> out(Shape{1}, total / static_cast<Scalar>(n));

  auto nw = w.node(), np = w_pos.node();
  return make_op(std::move(out), {w, w_pos}, [=](const Tensor<Scalar>& g) {
    const Scalar coef = g[0] / (temperature * static_cast<Scalar>(n));
    auto* sw = sink<Scalar>(nw);
    auto* sp = sink<Scalar>(np);
    const auto wv = nw->value.matrix();
    const auto pv = np->value.matrix();
    const auto qv = negatives.matrix();
    for (Index i = 0; i < n; ++i) {
      const Scalar pos_prob = prob(i, k);
      if (sw) {
        sw->matrix().row(i) += coef * (prob.row(i).head(k) * qv + (pos_prob - Scalar(1)) * pv.row(i));
      }
      if (sp) sp->matrix().row(i) += coef * (pos_prob - Scalar(1)) * wv.row(i);
    }
  });
}

#define BLINDSNF_INSTANTIATE_OPS(S)                                                                          \
  template Var<S> add(const Var<S>&, const Var<S>&);                                                         \
  template Var<S> sub(const Var<S>&, const Var<S>&);                                                         \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                                         \
  template Var<S> scale(const Var<S>&, S);                                                                   \
  template Var<S> reshape(const Var<S>&, Shape);                                                             \
  template Var<S> sum(const Var<S>&);                                                                        \
  template Var<S> mean(const Var<S>&);                                                                       \
  template Var<S> mean_abs(const Var<S>&);                                                                   \
  template Var<S> silu(const Var<S>&);                                                                       \
  template Var<S> leaky_relu(const Var<S>&, S);                                                              \
  template Var<S> linear(const Var<S>&, const Var<S>&, const Var<S>&);                                       \
  template Var<S> conv2d(const Var<S>&, const Var<S>&, const Var<S>&, Index, Index);                         \
  template Var<S> depthwise_conv3x3(const Var<S>&, const Var<S>&);                                           \
  template Var<S> group_norm(const Var<S>&, Index, const Var<S>&, const Var<S>&, S);                         \
  template Var<S> batch_norm(const Var<S>&, const Var<S>&, const Var<S>&, Tensor<S>&, Tensor<S>&, bool, S, S); \
  template Var<S> concat_channels(const Var<S>&, const Var<S>&);                                             \
  template Var<S> slice_batch(const Var<S>&, Index, Index);                                                  \
  template Var<S> resize_nearest(const Var<S>&, Index, Index);                                               \
  template Var<S> add_channel_bias(const Var<S>&, const Var<S>&);                                            \
  template Var<S> global_avg_pool(const Var<S>&);                                                            \
  template Var<S> l2_normalize_rows(const Var<S>&, S);                                                       \
  template Var<S> space_to_depth(const Var<S>&, Index);                                                      \
  template Var<S> depth_to_space(const Var<S>&, Index);                                                      \
  template Var<S> contrastive_loss(const Var<S>&, const Var<S>&, const Tensor<S>&, S, bool);

BLINDSNF_INSTANTIATE_OPS(float)
BLINDSNF_INSTANTIATE_OPS(double)

}  // namespace blindsnf
