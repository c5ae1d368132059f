#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include <Eigen/Core>

#include "lesion/autodiff.hpp"
#include "lesion/errors.hpp"
#include "lesion/random.hpp"

namespace lesion::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// Folds a boolean pattern into the tape's branch signature.
template <typename Pred>
void mix_pattern(Tape& tape, std::size_t n, Pred&& bit) {
  std::uint64_t word = 0;
  std::uint64_t acc = n;
  for (std::size_t i = 0; i < n; ++i) {
    word = (word << 1) | (bit(i) ? 1u : 0u);
    if ((i & 63) == 63) {
      acc = mix64(acc ^ word);
      word = 0;
    }
  }
  tape.mix_branch(mix64(acc ^ word));
}

struct ConvGeometry {
  std::size_t channels_in, height, width;
  std::size_t kernel_h, kernel_w;
  std::size_t pad_top, pad_left;
  std::size_t out_h, out_w;

  std::size_t patch() const { return channels_in * kernel_h * kernel_w; }
  std::size_t positions() const { return out_h * out_w; }
};

// Unrolls input patches to a [C_in*kh*kw, out_h*out_w] row-major matrix.
void im2col(const double* input, const ConvGeometry& g, double* cols) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.channels_in; ++c) {
    const double* plane = input + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        double* row = cols + ((c * g.kernel_h + ky) * g.kernel_w + kx) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
          double* out = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(out, out + g.out_w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
            out[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* input_grad) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.channels_in; ++c) {
    double* plane = input_grad + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const double* row = cols + ((c * g.kernel_h + ky) * g.kernel_w + kx) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Layers

Var conv2d(Var input, Var kernels, Var bias, Padding padding) {
  const Tensor& x = input.value();
  const Tensor& w = kernels.value();
  const Tensor& b = bias.value();
  require_rank(x, 3, "conv2d input");
  require_rank(w, 4, "conv2d kernels");
  if (w.dim(1) != x.dim(0)) {
    throw DimensionError("conv2d: kernels expect " + std::to_string(w.dim(1)) + " input channels, input has " +
                         std::to_string(x.dim(0)));
  }
  if (b.size() != w.dim(0)) {
    throw DimensionError("conv2d: bias has " + std::to_string(b.size()) + " entries for " +
                         std::to_string(w.dim(0)) + " output channels");
  }

  ConvGeometry g{};
  g.channels_in = x.dim(0);
  g.height = x.dim(1);
  g.width = x.dim(2);
  g.kernel_h = w.dim(2);
  g.kernel_w = w.dim(3);
  std::size_t pad_h = 0, pad_w = 0;
  if (padding == Padding::Same) {
    pad_h = g.kernel_h - 1;
    pad_w = g.kernel_w - 1;
  }
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  if (g.kernel_h > g.height + pad_h || g.kernel_w > g.width + pad_w) {
    throw DimensionError("conv2d: kernel " + shape_string(w.shape()) + " larger than padded input " +
                         shape_string(x.shape()));
  }
  g.out_h = g.height + pad_h - g.kernel_h + 1;
  g.out_w = g.width + pad_w - g.kernel_w + 1;

  const std::size_t c_out = w.dim(0);
  const std::size_t patch = g.patch();
  const std::size_t positions = g.positions();

  auto cols = std::make_shared<std::vector<double>>(patch * positions);
  im2col(x.data(), g, cols->data());

  Tensor out({c_out, g.out_h, g.out_w});
  MatrixMap out_m(out.data(), static_cast<Eigen::Index>(c_out), static_cast<Eigen::Index>(positions));
  ConstMatrixMap w_m(w.data(), static_cast<Eigen::Index>(c_out), static_cast<Eigen::Index>(patch));
  ConstMatrixMap cols_m(cols->data(), static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(positions));
  out_m.noalias() = w_m * cols_m;
  for (std::size_t o = 0; o < c_out; ++o) out_m.row(static_cast<Eigen::Index>(o)).array() += b[o];

  return input.tape->record(std::move(out), {input, kernels, bias}, [g, cols, c_out](const BackwardContext& ctx) {
    const auto patch = static_cast<Eigen::Index>(g.patch());
    const auto positions = static_cast<Eigen::Index>(g.positions());
    const auto outs = static_cast<Eigen::Index>(c_out);
    ConstMatrixMap dy(ctx.output_grad.data(), outs, positions);
    ConstMatrixMap cols_m(cols->data(), patch, positions);
    if (Tensor* dx = ctx.input_grads[0]) {
      ConstMatrixMap w_m(ctx.input_values[1]->data(), outs, patch);
      std::vector<double> dcols(static_cast<std::size_t>(patch * positions));
      MatrixMap dcols_m(dcols.data(), patch, positions);
      dcols_m.noalias() = w_m.transpose() * dy;
      col2im_add(dcols.data(), g, dx->data());
    }
    if (Tensor* dw = ctx.input_grads[1]) {
      MatrixMap dw_m(dw->data(), outs, patch);
      dw_m.noalias() += dy * cols_m.transpose();
    }
    if (Tensor* db = ctx.input_grads[2]) {
      // Plain loop: Eigen's vectorized reduction order depends on alignment.
      const double* src = ctx.output_grad.data();
      for (Eigen::Index o = 0; o < outs; ++o) {
        double acc = 0.0;
        for (Eigen::Index p = 0; p < positions; ++p) acc += src[o * positions + p];
        (*db)[static_cast<std::size_t>(o)] += acc;
      }
    }
  });
}

Var maxpool2d(Var input, std::size_t window) {
  const Tensor& x = input.value();
  require_rank(x, 3, "maxpool2d");
  if (window == 0) throw DimensionError("maxpool2d: window must be positive");
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  if (height % window != 0 || width % window != 0) {
    throw DimensionError("maxpool2d: spatial size " + shape_string(x.shape()) + " not divisible by window " +
                         std::to_string(window));
  }
  const std::size_t oh = height / window, ow = width / window;
  Tensor out({channels, oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());

  std::size_t o = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = (c * height + oy * window) * width + ox * window;
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t idx = (c * height + oy * window + dy) * width + ox * window + dx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        out[o] = x[best];
        (*argmax)[o] = best;
      }
    }
  }

  std::uint64_t acc = argmax->size();
  for (auto idx : *argmax) acc = mix64(acc ^ idx);
  input.tape->mix_branch(acc);

  return input.tape->record(std::move(out), {input}, [argmax](const BackwardContext& ctx) {
    Tensor* dx = ctx.input_grads[0];
    if (!dx) return;
    for (std::size_t i = 0; i < argmax->size(); ++i) (*dx)[(*argmax)[i]] += ctx.output_grad[i];
  });
}

Var upsample2x(Var input) {
  const Tensor& x = input.value();
  require_rank(x, 3, "upsample2x");
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  Tensor out({channels, 2 * height, 2 * width});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < 2 * height; ++y) {
      for (std::size_t xx = 0; xx < 2 * width; ++xx) out.at(c, y, xx) = x.at(c, y / 2, xx / 2);
    }
  }
  return input.tape->record(std::move(out), {input}, [](const BackwardContext& ctx) {
    Tensor* dx = ctx.input_grads[0];
    if (!dx) return;
    const std::size_t channels = dx->dim(0), height = dx->dim(1), width = dx->dim(2);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t y = 0; y < 2 * height; ++y) {
        for (std::size_t xx = 0; xx < 2 * width; ++xx) dx->at(c, y / 2, xx / 2) += ctx.output_grad.at(c, y, xx);
      }
    }
  });
}

Var relu(Var input) {
  const Tensor& x = input.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  mix_pattern(*input.tape, x.size(), [&](std::size_t i) { return x[i] > 0.0; });
  return input.tape->record(std::move(out), {input}, [](const BackwardContext& ctx) {
    Tensor* dx = ctx.input_grads[0];
    if (!dx) return;
    const Tensor& x = *ctx.input_values[0];
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] > 0.0) (*dx)[i] += ctx.output_grad[i];
    }
  });
}

Var sigmoid(Var input) {
  const Tensor& x = input.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  return input.tape->record(std::move(out), {input}, [](const BackwardContext& ctx) {
    Tensor* dx = ctx.input_grads[0];
    if (!dx) return;
    for (std::size_t i = 0; i < dx->size(); ++i) {
      const double y = ctx.output[i];
      (*dx)[i] += ctx.output_grad[i] * y * (1.0 - y);
    }
  });
}

Var activation(Var input, Activation kind) {
  return kind == Activation::Relu ? relu(input) : sigmoid(input);
}

Var concat_channels(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_rank(x, 3, "concat_channels");
  require_rank(y, 3, "concat_channels");
  if (x.dim(1) != y.dim(1) || x.dim(2) != y.dim(2)) {
    throw DimensionError("concat_channels: spatial mismatch " + shape_string(x.shape()) + " vs " +
                         shape_string(y.shape()));
  }
  Tensor out({x.dim(0) + y.dim(0), x.dim(1), x.dim(2)});
  std::copy(x.values().begin(), x.values().end(), out.data());
  std::copy(y.values().begin(), y.values().end(), out.data() + x.size());
  return a.tape->record(std::move(out), {a, b}, [](const BackwardContext& ctx) {
    const std::size_t split = ctx.input_values[0]->size();
    if (Tensor* da = ctx.input_grads[0]) {
      for (std::size_t i = 0; i < split; ++i) (*da)[i] += ctx.output_grad[i];
    }
    if (Tensor* db = ctx.input_grads[1]) {
      for (std::size_t i = 0; i < db->size(); ++i) (*db)[i] += ctx.output_grad[split + i];
    }
  });
}

Var slice_channels(Var input, std::size_t begin, std::size_t end) {
  const Tensor& x = input.value();
  require_rank(x, 3, "slice_channels");
  if (begin >= end || end > x.dim(0)) {
    throw IndexError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + shape_string(x.shape()));
  }
  const std::size_t plane = x.dim(1) * x.dim(2);
  Tensor out({end - begin, x.dim(1), x.dim(2)});
  std::copy(x.data() + begin * plane, x.data() + end * plane, out.data());
  const std::size_t offset = begin * plane;
  return input.tape->record(std::move(out), {input}, [offset](const BackwardContext& ctx) {
    Tensor* dx = ctx.input_grads[0];
    if (!dx) return;
    for (std::size_t i = 0; i < ctx.output_grad.size(); ++i) (*dx)[offset + i] += ctx.output_grad[i];
  });
}

Var dense(Var input, Var weights, Var bias) {
  const Tensor& x = input.value();
  const Tensor& w = weights.value();
  const Tensor& b = bias.value();
  require_rank(w, 2, "dense weights");
  const std::size_t m = w.dim(0), n = w.dim(1);
  if (x.size() != n) {
    throw DimensionError("dense: weights " + shape_string(w.shape()) + " cannot multiply input " +
                         shape_string(x.shape()));
  }
  if (b.size() != m) throw DimensionError("dense: bias " + shape_string(b.shape()) + " for " + std::to_string(m) + " outputs");

  // Plain loops keep the summation order fixed; the layers are small.
  Tensor out({m});
  for (std::size_t r = 0; r < m; ++r) {
    double acc = b[r];
    for (std::size_t c = 0; c < n; ++c) acc += w[r * n + c] * x[c];
    out[r] = acc;
  }

  return input.tape->record(std::move(out), {input, weights, bias}, [m, n](const BackwardContext& ctx) {
    const Tensor& dy = ctx.output_grad;
    if (Tensor* dx = ctx.input_grads[0]) {
      const Tensor& w = *ctx.input_values[1];
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) (*dx)[c] += w[r * n + c] * dy[r];
    }
    if (Tensor* dw = ctx.input_grads[1]) {
      const Tensor& x = *ctx.input_values[0];
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) (*dw)[r * n + c] += dy[r] * x[c];
    }
    if (Tensor* db = ctx.input_grads[2])
      for (std::size_t r = 0; r < m; ++r) (*db)[r] += dy[r];
  });
}

Var reshape(Var input, Shape shape) {
  Tensor out = input.value().reshaped(std::move(shape));
  return input.tape->record(std::move(out), {input}, [](const BackwardContext& ctx) {
    Tensor* dx = ctx.input_grads[0];
    if (!dx) return;
    for (std::size_t i = 0; i < dx->size(); ++i) (*dx)[i] += ctx.output_grad[i];
  });
}

Var flatten(Var input) { return reshape(input, {input.value().size()}); }

// ---------------------------------------------------------------------------
// Elementwise and reductions

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.tape->record(std::move(out), {a, b}, [](const BackwardContext& ctx) {
    for (Tensor* g : ctx.input_grads) {
      if (!g) continue;
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += ctx.output_grad[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape->record(std::move(out), {a, b}, [](const BackwardContext& ctx) {
    const Tensor& x = *ctx.input_values[0];
    const Tensor& y = *ctx.input_values[1];
    if (Tensor* dx = ctx.input_grads[0]) {
      for (std::size_t i = 0; i < dx->size(); ++i) (*dx)[i] += ctx.output_grad[i] * y[i];
    }
    if (Tensor* dy = ctx.input_grads[1]) {
      for (std::size_t i = 0; i < dy->size(); ++i) (*dy)[i] += ctx.output_grad[i] * x[i];
    }
  });
}

Var scale(Var input, double factor) {
  Tensor out = input.value();
  for (auto& v : out.values()) v *= factor;
  return input.tape->record(std::move(out), {input}, [factor](const BackwardContext& ctx) {
    Tensor* dx = ctx.input_grads[0];
    if (!dx) return;
    for (std::size_t i = 0; i < dx->size(); ++i) (*dx)[i] += factor * ctx.output_grad[i];
  });
}

Var square(Var input) {
  Tensor out = input.value();
  for (auto& v : out.values()) v *= v;
  return input.tape->record(std::move(out), {input}, [](const BackwardContext& ctx) {
    Tensor* dx = ctx.input_grads[0];
    if (!dx) return;
    const Tensor& x = *ctx.input_values[0];
    for (std::size_t i = 0; i < dx->size(); ++i) (*dx)[i] += 2.0 * x[i] * ctx.output_grad[i];
  });
}

Var sum(Var input) {
  double total = 0.0;
  for (double v : input.value().values()) total += v;
  return input.tape->record(Tensor::scalar(total), {input}, [](const BackwardContext& ctx) {
    Tensor* dx = ctx.input_grads[0];
    if (!dx) return;
    const double g = ctx.output_grad[0];
    for (auto& v : dx->values()) v += g;
  });
}

Var mean(Var input) { return scale(sum(input), 1.0 / static_cast<double>(input.value().size())); }

// ---------------------------------------------------------------------------
// Losses

Var loss_bce(Var predicted, const Tensor& target) {
  const Tensor& p = predicted.value();
  require_same_shape(p, target, "loss_bce");
  const double n = static_cast<double>(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double c = std::clamp(p[i], kBceClip, 1.0 - kBceClip);
    const double t = target[i];
    total -= t * std::log(c) + (1.0 - t) * std::log(1.0 - c);
  }
  mix_pattern(*predicted.tape, p.size(), [&](std::size_t i) { return p[i] < kBceClip || p[i] > 1.0 - kBceClip; });

  return predicted.tape->record(Tensor::scalar(total / n), {predicted},
                                [target, n](const BackwardContext& ctx) {
                                  Tensor* dp = ctx.input_grads[0];
                                  if (!dp) return;
                                  const Tensor& p = *ctx.input_values[0];
                                  const double g = ctx.output_grad[0] / n;
                                  for (std::size_t i = 0; i < p.size(); ++i) {
                                    const double v = p[i];
                                    if (v < kBceClip || v > 1.0 - kBceClip) continue;
                                    const double t = target[i];
                                    (*dp)[i] += g * (-t / v + (1.0 - t) / (1.0 - v));
                                  }
                                });
}

Tensor softmax(const Tensor& logits) {
  Tensor out(logits.shape());
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : logits.values()) peak = std::max(peak, v);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (auto& v : out.values()) v /= total;
  return out;
}

Var loss_softmax_ce(Var logits, std::size_t class_index) {
  const Tensor& z = logits.value();
  if (z.size() < 2) throw ContractError("loss_softmax_ce: need at least 2 classes, got " + std::to_string(z.size()));
  if (class_index >= z.size()) {
    throw IndexError("loss_softmax_ce: class " + std::to_string(class_index) + " out of range for " +
                     std::to_string(z.size()) + " logits");
  }
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : z.values()) peak = std::max(peak, v);
  double total = 0.0;
  for (double v : z.values()) total += std::exp(v - peak);
  const double loss = std::log(total) - (z[class_index] - peak);

  return logits.tape->record(Tensor::scalar(loss), {logits}, [class_index](const BackwardContext& ctx) {
    Tensor* dz = ctx.input_grads[0];
    if (!dz) return;
    const Tensor probs = softmax(*ctx.input_values[0]);
    const double g = ctx.output_grad[0];
    for (std::size_t i = 0; i < probs.size(); ++i) {
      (*dz)[i] += g * (probs[i] - (i == class_index ? 1.0 : 0.0));
    }
  });
}

}  // namespace lesion::ad
