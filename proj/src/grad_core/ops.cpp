#include "mal/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace mal {
namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<MatRM>;
using ConstMapMat = Eigen::Map<const MatRM>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;

[[noreturn]] void shape_fail(const std::string& op, const std::string& what) {
  throw ShapeError(op + ": " + what);
}

void require_same_shape(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_fail(op, "operand shapes differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const std::string& op, const Tensor& t, std::size_t rank, const char* name) {
  if (t.rank() != rank) {
    shape_fail(op, std::string(name) + " must have rank " + std::to_string(rank) + ", got " +
                       shape_str(t.shape()));
  }
}

void accumulate(Tensor& t, std::span<const double> g, double scale = 1.0) {
  auto dst = t.mutable_grad();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * g[i];
}

// Unfolds one [C,H,W] image into a [C*kh*kw, Ho*Wo] column matrix.
// Four interleaved partial sums, combined in a fixed order.
double dot(const double* a, const double* b, std::size_t n) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (std::size_t l = 0; l < 4; ++l) acc[l] += a[i + l] * b[i + l];
  }
  for (; i < n; ++i) acc[i % 4] += a[i] * b[i];
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

void im2col(const double* img, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t kh, std::size_t kw, std::size_t pad, double* col) {
  const std::size_t out_h = height + 2 * pad - kh + 1;
  const std::size_t out_w = width + 2 * pad - kw + 1;
  const auto ipad = static_cast<std::ptrdiff_t>(pad);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        double* row = col + ((c * kh + ki) * kw + kj) * out_h * out_w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ki) - ipad;
          double* dst = row + oy * out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(dst, dst + out_w, 0.0);
            continue;
          }
          const double* src = img + (c * height + static_cast<std::size_t>(iy)) * width;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kj) - ipad;
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back into image gradients.
void col2im(const double* col, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t kh, std::size_t kw, std::size_t pad, double* img) {
  const std::size_t out_h = height + 2 * pad - kh + 1;
  const std::size_t out_w = width + 2 * pad - kw + 1;
  const auto ipad = static_cast<std::ptrdiff_t>(pad);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const double* row = col + ((c * kh + ki) * kw + kj) * out_h * out_w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ki) - ipad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
          const double* src = row + oy * out_w;
          double* dst = img + (c * height + static_cast<std::size_t>(iy)) * width;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kj) - ipad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename Fn>
Tensor elementwise_binary(const char* op, const Tensor& a, const Tensor& b, Fn fn) {
  require_same_shape(op, a, b);
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fn(x[i], y[i]);
  return out;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  Tensor out = elementwise_binary("add", a, b, [](double x, double y) { return x + y; });
  if (tape.should_record({&a, &b})) {
    tape.record(out, [a = Tensor(a), b = Tensor(b)](std::span<const double> g) mutable {
      if (a.requires_grad()) accumulate(a, g);
      if (b.requires_grad()) accumulate(b, g);
    });
  }
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  Tensor out = elementwise_binary("sub", a, b, [](double x, double y) { return x - y; });
  if (tape.should_record({&a, &b})) {
    tape.record(out, [a = Tensor(a), b = Tensor(b)](std::span<const double> g) mutable {
      if (a.requires_grad()) accumulate(a, g);
      if (b.requires_grad()) accumulate(b, g, -1.0);
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  Tensor out = elementwise_binary("multiply", a, b, [](double x, double y) { return x * y; });
  if (tape.should_record({&a, &b})) {
    tape.record(out, [a = Tensor(a), b = Tensor(b)](std::span<const double> g) mutable {
      // Read both operands before writing: a and b may be the same tensor.
      auto av = a.data();
      auto bv = b.data();
      std::vector<double> ga(g.size()), gb(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] = g[i] * bv[i];
        gb[i] = g[i] * av[i];
      }
      if (a.requires_grad()) accumulate(a, ga);
      if (b.requires_grad()) accumulate(b, gb);
    });
  }
  return out;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2, "lhs");
  require_rank("matmul", b, 2, "rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    shape_fail("matmul", "inner dims differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor out({m, n});
  MapMat(out.data().data(), m, n).noalias() =
      ConstMapMat(a.data().data(), m, k) * ConstMapMat(b.data().data(), k, n);
  if (tape.should_record({&a, &b})) {
    tape.record(out, [a = Tensor(a), b = Tensor(b), m, k, n](std::span<const double> g) mutable {
      ConstMapMat dc(g.data(), m, n);
      if (a.requires_grad()) {
        MapMat(a.mutable_grad().data(), m, k).noalias() +=
            dc * ConstMapMat(b.data().data(), k, n).transpose();
      }
      if (b.requires_grad()) {
        MapMat(b.mutable_grad().data(), k, n).noalias() +=
            ConstMapMat(a.data().data(), m, k).transpose() * dc;
      }
    });
  }
  return out;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank("linear", x, 2, "input");
  require_rank("linear", weight, 2, "weight");
  require_rank("linear", bias, 1, "bias");
  const std::size_t batch = x.dim(0), in = x.dim(1), outf = weight.dim(0);
  if (weight.dim(1) != in || bias.dim(0) != outf) {
    shape_fail("linear", "input " + shape_str(x.shape()) + ", weight " + shape_str(weight.shape()) +
                             ", bias " + shape_str(bias.shape()));
  }
  // Plain loops with a fixed summation order: Eigen's GEMV peels by buffer
  // alignment, so its rounding would depend on heap addresses.
  Tensor out({batch, outf});
  const double* w = weight.data().data();
  const double* bv = bias.data().data();
  for (std::size_t r = 0; r < batch; ++r) {
    const double* xr = x.data().data() + r * in;
    double* o = out.data().data() + r * outf;
    for (std::size_t j = 0; j < outf; ++j) o[j] = bv[j] + dot(w + j * in, xr, in);
  }
  if (tape.should_record({&x, &weight, &bias})) {
    tape.record(out, [x = Tensor(x), weight = Tensor(weight), bias = Tensor(bias), batch, in, outf](std::span<const double> g) mutable {
      const double* w = weight.data().data();
      for (std::size_t r = 0; r < batch; ++r) {
        const double* gr = g.data() + r * outf;
        const double* xr = x.data().data() + r * in;
        if (x.requires_grad()) {
          double* xg = x.mutable_grad().data() + r * in;
          for (std::size_t j = 0; j < outf; ++j) {
            const double gj = gr[j];
            const double* wj = w + j * in;
            for (std::size_t k = 0; k < in; ++k) xg[k] += gj * wj[k];
          }
        }
        if (weight.requires_grad()) {
          double* wg = weight.mutable_grad().data();
          for (std::size_t j = 0; j < outf; ++j) {
            const double gj = gr[j];
            for (std::size_t k = 0; k < in; ++k) wg[j * in + k] += gj * xr[k];
          }
        }
        if (bias.requires_grad()) {
          double* bg = bias.mutable_grad().data();
          for (std::size_t j = 0; j < outf; ++j) bg[j] += gr[j];
        }
      }
    });
  }
  return out;
}

namespace {

Tensor conv2d_impl(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor* bias,
                   std::size_t padding) {
  require_rank("conv2d", x, 4, "input");
  require_rank("conv2d", weight, 4, "weight");
  const std::size_t batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
  const std::size_t out_c = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != channels) {
    shape_fail("conv2d", "input channels " + std::to_string(channels) + " vs weight " +
                             shape_str(weight.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != out_c)) {
    shape_fail("conv2d", "bias " + shape_str(bias->shape()) + " for " + std::to_string(out_c) +
                             " output channels");
  }
  if (height + 2 * padding < kh || width + 2 * padding < kw) {
    shape_fail("conv2d", "kernel " + shape_str(weight.shape()) + " larger than padded input " +
                             shape_str(x.shape()));
  }
  const std::size_t out_h = height + 2 * padding - kh + 1;
  const std::size_t out_w = width + 2 * padding - kw + 1;
  const std::size_t ck = channels * kh * kw;
  const std::size_t hw = out_h * out_w;
  const std::size_t in_stride = channels * height * width;

  const bool recording = tape.should_record({&x, &weight, bias});
  const bool keep_cols = recording && weight.requires_grad();
  auto cols = std::make_shared<std::vector<double>>(keep_cols ? batch * ck * hw : ck * hw);

  Tensor out({batch, out_c, out_h, out_w});
  ConstMapMat w(weight.data().data(), out_c, ck);
  for (std::size_t n = 0; n < batch; ++n) {
    double* col = cols->data() + (keep_cols ? n * ck * hw : 0);
    im2col(x.data().data() + n * in_stride, channels, height, width, kh, kw, padding, col);
    MapMat o(out.data().data() + n * out_c * hw, out_c, hw);
    o.noalias() = w * ConstMapMat(col, ck, hw);
    if (bias) o.colwise() += ConstMapVec(bias->data().data(), out_c);
  }

  if (recording) {
    Tensor b = bias ? *bias : Tensor();
    const bool has_bias = bias != nullptr;
    tape.record(out, [x = Tensor(x), weight = Tensor(weight), b = Tensor(b), has_bias, cols, batch, channels, height, width, out_c, kh, kw, padding, ck, hw, in_stride](std::span<const double> g) mutable {
      ConstMapMat w(weight.data().data(), out_c, ck);
      std::vector<double> dcol(x.requires_grad() ? ck * hw : 0);
      for (std::size_t n = 0; n < batch; ++n) {
        ConstMapMat go(g.data() + n * out_c * hw, out_c, hw);
        if (weight.requires_grad()) {
          MapMat(weight.mutable_grad().data(), out_c, ck).noalias() +=
              go * ConstMapMat(cols->data() + n * ck * hw, ck, hw).transpose();
        }
        if (has_bias && b.requires_grad()) {
          // Sequential sums; Eigen's vectorized reduction order depends on alignment.
          double* bg = b.mutable_grad().data();
          const double* gn = g.data() + n * out_c * hw;
          for (std::size_t c = 0; c < out_c; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < hw; ++i) acc += gn[c * hw + i];
            bg[c] += acc;
          }
        }
        if (x.requires_grad()) {
          MapMat(dcol.data(), ck, hw).noalias() = w.transpose() * go;
          col2im(dcol.data(), channels, height, width, kh, kw, padding,
                 x.mutable_grad().data() + n * in_stride);
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t padding) {
  return conv2d_impl(tape, x, weight, &bias, padding);
}

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& weight, std::size_t padding) {
  return conv2d_impl(tape, x, weight, nullptr, padding);
}

Tensor relu(Tape& tape, const Tensor& x) {
  Tensor out(x.shape());
  auto o = out.data();
  auto v = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = v[i] > 0.0 ? v[i] : 0.0;
  if (tape.should_record({&x})) {
    tape.record(out, [x = Tensor(x)](std::span<const double> g) mutable {
      auto v = x.data();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (v[i] > 0.0) dx[i] += g[i];
      }
    });
  }
  return out;
}

Tensor max_pool2x2(Tape& tape, const Tensor& x) {
  require_rank("max_pool2x2", x, 4, "input");
  const std::size_t planes = x.dim(0) * x.dim(1), height = x.dim(2), width = x.dim(3);
  if (height % 2 || width % 2) {
    shape_fail("max_pool2x2", "spatial dims must be even, got " + shape_str(x.shape()));
  }
  const std::size_t oh = height / 2, ow = width / 2;
  Tensor out({x.dim(0), x.dim(1), oh, ow});
  const bool recording = tape.should_record({&x});
  auto argmax = std::make_shared<std::vector<std::size_t>>(recording ? out.numel() : 0);
  auto in = x.data();
  auto o = out.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        const std::size_t base = (p * height + 2 * y) * width + 2 * xo;
        std::size_t best = base;
        for (std::size_t cand : {base + 1, base + width, base + width + 1}) {
          if (in[cand] > in[best]) best = cand;
        }
        const std::size_t oi = (p * oh + y) * ow + xo;
        o[oi] = in[best];
        if (recording) (*argmax)[oi] = best;
      }
    }
  }
  if (recording) {
    tape.record(out, [x = Tensor(x), argmax](std::span<const double> g) mutable {
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) dx[(*argmax)[i]] += g[i];
    });
  }
  return out;
}

Tensor flatten(Tape& tape, const Tensor& x) {
  if (x.rank() < 1) shape_fail("flatten", "needs a batch axis, got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0);
  const std::size_t rest = batch ? x.numel() / batch : 0;
  Tensor out({batch, rest}, std::vector<double>(x.data().begin(), x.data().end()));
  if (tape.should_record({&x})) {
    tape.record(out, [x = Tensor(x)](std::span<const double> g) mutable { accumulate(x, g); });
  }
  return out;
}

Tensor batch_mean(Tape& tape, const Tensor& x) {
  if (x.rank() < 1 || x.dim(0) == 0) {
    shape_fail("batch_mean", "needs a non-empty batch axis, got " + shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t inner = x.numel() / batch;
  Shape out_shape(x.shape().begin() + 1, x.shape().end());
  Tensor out(out_shape);
  auto v = x.data();
  auto o = out.data();
  for (std::size_t j = 0; j < inner; ++j) {
    double acc = 0.0;
    for (std::size_t n = 0; n < batch; ++n) acc += v[n * inner + j];
    o[j] = acc / static_cast<double>(batch);
  }
  if (tape.should_record({&x})) {
    tape.record(out, [x = Tensor(x), batch, inner](std::span<const double> g) mutable {
      auto dx = x.mutable_grad();
      const double scale = 1.0 / static_cast<double>(batch);
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t j = 0; j < inner; ++j) dx[n * inner + j] += g[j] * scale;
      }
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (tape.should_record({&x})) {
    tape.record(out, [x = Tensor(x)](std::span<const double> g) mutable {
      auto dx = x.mutable_grad();
      for (double& d : dx) d += g[0];
    });
  }
  return out;
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> targets) {
  require_rank("softmax_cross_entropy", logits, 2, "logits");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (targets.size() != batch) {
    shape_fail("softmax_cross_entropy", std::to_string(targets.size()) + " targets for logits " +
                                            shape_str(logits.shape()));
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= classes) {
      shape_fail("softmax_cross_entropy",
                 "target " + std::to_string(t) + " outside [0," + std::to_string(classes) + ")");
    }
  }
  auto z = logits.data();
  Tensor out({batch});
  auto probs = std::make_shared<std::vector<double>>(batch * classes);
  for (std::size_t n = 0; n < batch; ++n) {
    const double* row = z.data() + n * classes;
    const double m = *std::max_element(row, row + classes);
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      (*probs)[n * classes + c] = std::exp(row[c] - m);
      total += (*probs)[n * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) (*probs)[n * classes + c] /= total;
    out[n] = m + std::log(total) - row[targets[n]];
  }
  if (tape.should_record({&logits})) {
    std::vector<int> tgt(targets.begin(), targets.end());
    tape.record(out, [logits = Tensor(logits), probs, tgt, batch, classes](std::span<const double> g) mutable {
      auto dz = logits.mutable_grad();
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t c = 0; c < classes; ++c) {
          const double onehot = static_cast<int>(c) == tgt[n] ? 1.0 : 0.0;
          dz[n * classes + c] += g[n] * ((*probs)[n * classes + c] - onehot);
        }
      }
    });
  }
  return out;
}

Tensor squared_l2_distance(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("squared_l2_distance", a, b);
  auto x = a.data();
  auto y = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  Tensor out = Tensor::scalar(acc);
  if (tape.should_record({&a, &b})) {
    tape.record(out, [a = Tensor(a), b = Tensor(b)](std::span<const double> g) mutable {
      auto x = a.data();
      auto y = b.data();
      std::vector<double> diff(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) diff[i] = 2.0 * (x[i] - y[i]) * g[0];
      if (a.requires_grad()) accumulate(a, diff);
      if (b.requires_grad()) accumulate(b, diff, -1.0);
    });
  }
  return out;
}

Tensor sign_elementwise(const Tensor& t) {
  Tensor out(t.shape());
  auto o = out.data();
  auto v = t.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = v[i] > 0.0 ? 1.0 : (v[i] < 0.0 ? -1.0 : 0.0);
  return out;
}

Tensor l1_normalize(const Tensor& t) {
  double norm = 0.0;
  for (double v : t.data()) norm += std::abs(v);
  if (!(norm > 0.0)) throw ZeroGradientError("l1_normalize: input has zero L1 norm");
  Tensor out(t.shape());
  auto o = out.data();
  auto v = t.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = v[i] / norm;
  return out;
}

Tensor forward_primitive(Tape& tape, OpKind kind, std::span<const Tensor> inputs,
                         const OpParams& params) {
  auto need = [&](std::size_t n, const char* op) {
    if (inputs.size() != n) {
      shape_fail(op, "expects " + std::to_string(n) + " inputs, got " + std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case OpKind::kAdd: need(2, "add"); return add(tape, inputs[0], inputs[1]);
    case OpKind::kSub: need(2, "sub"); return sub(tape, inputs[0], inputs[1]);
    case OpKind::kMultiply: need(2, "multiply"); return mul(tape, inputs[0], inputs[1]);
    case OpKind::kMatmul: need(2, "matmul"); return matmul(tape, inputs[0], inputs[1]);
    case OpKind::kConv2d:
      if (inputs.size() == 2) return conv2d(tape, inputs[0], inputs[1], params.padding);
      need(3, "conv2d");
      return conv2d(tape, inputs[0], inputs[1], inputs[2], params.padding);
    case OpKind::kRelu: need(1, "relu"); return relu(tape, inputs[0]);
    case OpKind::kMaxPool2x2: need(1, "max_pool2x2"); return max_pool2x2(tape, inputs[0]);
    case OpKind::kFlatten: need(1, "flatten"); return flatten(tape, inputs[0]);
    case OpKind::kLinear: need(3, "linear"); return linear(tape, inputs[0], inputs[1], inputs[2]);
    case OpKind::kBatchMean: need(1, "batch_mean"); return batch_mean(tape, inputs[0]);
    case OpKind::kSoftmaxCrossEntropy:
      need(1, "softmax_cross_entropy");
      return softmax_cross_entropy(tape, inputs[0], params.targets);
    case OpKind::kSquaredL2:
      need(2, "squared_l2_distance");
      return squared_l2_distance(tape, inputs[0], inputs[1]);
  }
  throw std::invalid_argument("forward_primitive: unknown op kind");
}

}  // namespace mal
