#include <cmath>
#include <cstring>
#include <stdexcept>

#include "inklab/tensor.hpp"

namespace inklab {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

[[noreturn]] void op_error(const std::string& op, const std::string& msg) {
  throw std::invalid_argument(op + ": " + msg);
}

void check_finite(const char* op, const Tensor& t) {
  for (float v : t.data())
    if (!std::isfinite(v)) throw std::runtime_error(std::string(op) + ": non-finite output");
}

bool want_record(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

void record(std::function<void()> fn) { Tape::current()->record(std::move(fn)); }

// C += A(m x k) * B(k x n), row-major. Each output row is owned by one
// thread and accumulated in a fixed order, so results are identical for any
// thread count.
void gemm_nn(int m, int k, int n, const float* A, const float* B, float* C) {
#pragma omp parallel for schedule(static) if (static_cast<int64_t>(m) * k * n > 32768)
  for (int i = 0; i < m; ++i) {
    const float* a_row = A + static_cast<size_t>(i) * k;
    float* c_row = C + static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const float a = a_row[l];
      if (a == 0.0f) continue;
      const float* b_row = B + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) c_row[j] += a * b_row[j];
    }
  }
}

void transpose(int rows, int cols, const float* src, float* dst) {
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) dst[static_cast<size_t>(j) * rows + i] = src[static_cast<size_t>(i) * cols + j];
}

struct ConvDims {
  int n, cin, h, w, cout, kh, kw, stride, pad, oh, ow;
  int patch() const { return cin * kh * kw; }
  int omap() const { return oh * ow; }
};

// x(c,h,w) -> cols(patch x omap) with zero padding.
void im2col(const float* x, const ConvDims& d, float* cols) {
  int idx = 0;
  for (int c = 0; c < d.cin; ++c)
    for (int ky = 0; ky < d.kh; ++ky)
      for (int kx = 0; kx < d.kw; ++kx) {
        float* row = cols + static_cast<size_t>(idx++) * d.omap();
        int m = 0;
        for (int oy = 0; oy < d.oh; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.h) {
            for (int ox = 0; ox < d.ow; ++ox) row[m++] = 0.0f;
            continue;
          }
          const float* xr = x + (static_cast<size_t>(c) * d.h + iy) * d.w;
          for (int ox = 0; ox < d.ow; ++ox) {
            const int ix = ox * d.stride - d.pad + kx;
            row[m++] = (ix < 0 || ix >= d.w) ? 0.0f : xr[ix];
          }
        }
      }
}

// cols(patch x omap) accumulated back into dx(c,h,w).
void col2im(const float* cols, const ConvDims& d, float* dx) {
  int idx = 0;
  for (int c = 0; c < d.cin; ++c)
    for (int ky = 0; ky < d.kh; ++ky)
      for (int kx = 0; kx < d.kw; ++kx) {
        const float* row = cols + static_cast<size_t>(idx++) * d.omap();
        int m = 0;
        for (int oy = 0; oy < d.oh; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.h) {
            m += d.ow;
            continue;
          }
          float* xr = dx + (static_cast<size_t>(c) * d.h + iy) * d.w;
          for (int ox = 0; ox < d.ow; ++ox, ++m) {
            const int ix = ox * d.stride - d.pad + kx;
            if (ix >= 0 && ix < d.w) xr[ix] += row[m];
          }
        }
      }
}

enum class BroadcastKind { Same, Scalar, ChannelVec, RowMatrix };

BroadcastKind broadcast_kind(const char* op, const std::vector<int>& a, const std::vector<int>& b) {
  if (a == b) return BroadcastKind::Same;
  if (b.size() == 1 && b[0] == 1) return BroadcastKind::Scalar;
  if (b.size() == 1 && a.size() >= 2 && b[0] == a[1]) return BroadcastKind::ChannelVec;
  if (b.size() == 2 && a.size() == 4 && b[0] == a[0] && b[1] == a[1]) return BroadcastKind::RowMatrix;
  op_error(op, "incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// Elementwise unary op with pointwise derivative computed from (x, y).
template <typename Fwd, typename Bwd>
Tensor unary_op(const char* name, const Tensor& x, Fwd fwd, Bwd dydx) {
  const bool rec = want_record({&x});
  Tensor out = make_op_output(x.shape(), rec);
  const auto& xv = x.data();
  auto& yv = out.data();
  for (size_t i = 0; i < xv.size(); ++i) yv[i] = fwd(xv[i]);
  check_finite(name, out);
  if (rec) {
    NodePtr xn = x.node(), yn = out.node();
    record([xn, yn, dydx]() {
      if (yn->grad.empty() || !xn->requires_grad) return;
      xn->ensure_grad();
      for (size_t i = 0; i < xn->value.size(); ++i)
        xn->grad[i] += yn->grad[i] * dydx(xn->value[i], yn->value[i]);
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const auto kind = broadcast_kind("add", a.shape(), b.shape());
  const bool rec = want_record({&a, &b});
  Tensor out = make_op_output(a.shape(), rec);
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& yv = out.data();

  const auto& sh = a.shape();
  const int64_t n = a.numel();
  int64_t inner = 1, chan = 1;
  if (kind == BroadcastKind::ChannelVec) {
    chan = sh[1];
    for (size_t i = 2; i < sh.size(); ++i) inner *= sh[i];
  } else if (kind == BroadcastKind::RowMatrix) {
    chan = sh[0] * static_cast<int64_t>(sh[1]);
    inner = static_cast<int64_t>(sh[2]) * sh[3];
  }

  switch (kind) {
    case BroadcastKind::Same:
      for (int64_t i = 0; i < n; ++i) yv[i] = av[i] + bv[i];
      break;
    case BroadcastKind::Scalar:
      for (int64_t i = 0; i < n; ++i) yv[i] = av[i] + bv[0];
      break;
    case BroadcastKind::ChannelVec:
      for (int64_t i = 0; i < n; ++i) yv[i] = av[i] + bv[(i / inner) % chan];
      break;
    case BroadcastKind::RowMatrix:
      for (int64_t i = 0; i < n; ++i) yv[i] = av[i] + bv[i / inner];
      break;
  }
  check_finite("add", out);

  if (rec) {
    NodePtr an = a.node(), bn = b.node(), yn = out.node();
    record([an, bn, yn, kind, inner, chan]() {
      if (yn->grad.empty()) return;
      const auto& g = yn->grad;
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        switch (kind) {
          case BroadcastKind::Same:
            for (size_t i = 0; i < g.size(); ++i) bn->grad[i] += g[i];
            break;
          case BroadcastKind::Scalar: {
            float s = 0.0f;
            for (float v : g) s += v;
            bn->grad[0] += s;
            break;
          }
          case BroadcastKind::ChannelVec:
            for (size_t i = 0; i < g.size(); ++i)
              bn->grad[static_cast<size_t>((static_cast<int64_t>(i) / inner) % chan)] += g[i];
            break;
          case BroadcastKind::RowMatrix:
            for (size_t i = 0; i < g.size(); ++i)
              bn->grad[static_cast<size_t>(static_cast<int64_t>(i) / inner)] += g[i];
            break;
        }
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const bool scalar_b = b.numel() == 1 && b.ndim() == 1;
  if (!scalar_b && a.shape() != b.shape())
    op_error("sub", "incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const bool rec = want_record({&a, &b});
  Tensor out = make_op_output(a.shape(), rec);
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& yv = out.data();
  for (size_t i = 0; i < av.size(); ++i) yv[i] = av[i] - (scalar_b ? bv[0] : bv[i]);
  check_finite("sub", out);
  if (rec) {
    NodePtr an = a.node(), bn = b.node(), yn = out.node();
    record([an, bn, yn, scalar_b]() {
      if (yn->grad.empty()) return;
      const auto& g = yn->grad;
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        if (scalar_b) {
          float s = 0.0f;
          for (float v : g) s += v;
          bn->grad[0] -= s;
        } else {
          for (size_t i = 0; i < g.size(); ++i) bn->grad[i] -= g[i];
        }
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const bool scalar_b = b.numel() == 1 && b.ndim() == 1;
  if (!scalar_b && a.shape() != b.shape())
    op_error("mul", "incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const bool rec = want_record({&a, &b});
  Tensor out = make_op_output(a.shape(), rec);
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& yv = out.data();
  for (size_t i = 0; i < av.size(); ++i) yv[i] = av[i] * (scalar_b ? bv[0] : bv[i]);
  check_finite("mul", out);
  if (rec) {
    NodePtr an = a.node(), bn = b.node(), yn = out.node();
    record([an, bn, yn, scalar_b]() {
      if (yn->grad.empty()) return;
      const auto& g = yn->grad;
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i] * (scalar_b ? bn->value[0] : bn->value[i]);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        if (scalar_b) {
          float s = 0.0f;
          for (size_t i = 0; i < g.size(); ++i) s += g[i] * an->value[i];
          bn->grad[0] += s;
        } else {
          for (size_t i = 0; i < g.size(); ++i) bn->grad[i] += g[i] * an->value[i];
        }
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, float s) {
  return unary_op(
      "scale", a, [s](float x) { return s * x; }, [s](float, float) { return s; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    op_error("matmul", "incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const bool rec = want_record({&a, &b});
  Tensor out = make_op_output({m, n}, rec);
  gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data().data());
  check_finite("matmul", out);
  if (rec) {
    NodePtr an = a.node(), bn = b.node(), yn = out.node();
    record([an, bn, yn, m, k, n]() {
      if (yn->grad.empty()) return;
      const float* g = yn->grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        std::vector<float> bt(static_cast<size_t>(n) * k);
        transpose(k, n, bn->value.data(), bt.data());
        gemm_nn(m, n, k, g, bt.data(), an->grad.data());
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        std::vector<float> at(static_cast<size_t>(k) * m);
        transpose(m, k, an->value.data(), at.data());
        gemm_nn(k, m, n, at.data(), g, bn->grad.data());
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  if (x.ndim() != 4 || w.ndim() != 4)
    op_error("conv2d", "expected 4-d input and weight, got " + shape_str(x.shape()) + " and " +
                           shape_str(w.shape()));
  if (x.dim(1) != w.dim(1))
    op_error("conv2d", "input channels " + shape_str(x.shape()) + " do not match weight " +
                           shape_str(w.shape()));
  if (stride < 1 || pad < 0) op_error("conv2d", "stride must be >=1 and padding >=0");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), stride, pad, 0, 0};
  d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.kh > d.h + 2 * pad || d.kw > d.w + 2 * pad || d.oh < 1 || d.ow < 1)
    op_error("conv2d", "kernel " + shape_str(w.shape()) + " too large for input " + shape_str(x.shape()));
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != d.cout))
    op_error("conv2d", "bias shape " + shape_str(bias.shape()) + " does not match " +
                           std::to_string(d.cout) + " output channels");

  const bool rec = want_record({&x, &w, &bias});
  Tensor out = make_op_output({d.n, d.cout, d.oh, d.ow}, rec);

  const int K = d.patch(), M = d.omap();
  std::vector<float> cols(static_cast<size_t>(K) * M);
  for (int img = 0; img < d.n; ++img) {
    im2col(x.data().data() + static_cast<size_t>(img) * d.cin * d.h * d.w, d, cols.data());
    float* y = out.data().data() + static_cast<size_t>(img) * d.cout * M;
    gemm_nn(d.cout, K, M, w.data().data(), cols.data(), y);
    if (bias.defined()) {
      for (int c = 0; c < d.cout; ++c) {
        const float bc = bias.data()[static_cast<size_t>(c)];
        float* yr = y + static_cast<size_t>(c) * M;
        for (int i = 0; i < M; ++i) yr[i] += bc;
      }
    }
  }
  check_finite("conv2d", out);

  if (rec) {
    NodePtr xn = x.node(), wn = w.node(), yn = out.node();
    NodePtr bn = bias.defined() ? bias.node() : nullptr;
    record([xn, wn, bn, yn, d]() {
      if (yn->grad.empty()) return;
      const int K = d.patch(), M = d.omap();
      const float* gy = yn->grad.data();

      if (wn->requires_grad) {
        wn->ensure_grad();
        std::vector<float> cols(static_cast<size_t>(K) * M);
        std::vector<float> colsT(static_cast<size_t>(M) * K);
        for (int img = 0; img < d.n; ++img) {
          im2col(xn->value.data() + static_cast<size_t>(img) * d.cin * d.h * d.w, d, cols.data());
          transpose(K, M, cols.data(), colsT.data());
          gemm_nn(d.cout, M, K, gy + static_cast<size_t>(img) * d.cout * M, colsT.data(),
                  wn->grad.data());
        }
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        std::vector<float> wt(static_cast<size_t>(K) * d.cout);
        transpose(d.cout, K, wn->value.data(), wt.data());
        std::vector<float> dcols(static_cast<size_t>(K) * M);
        for (int img = 0; img < d.n; ++img) {
          std::fill(dcols.begin(), dcols.end(), 0.0f);
          gemm_nn(K, d.cout, M, wt.data(), gy + static_cast<size_t>(img) * d.cout * M, dcols.data());
          col2im(dcols.data(), d, xn->grad.data() + static_cast<size_t>(img) * d.cin * d.h * d.w);
        }
      }
      if (bn && bn->requires_grad) {
        bn->ensure_grad();
        for (int img = 0; img < d.n; ++img)
          for (int c = 0; c < d.cout; ++c) {
            const float* gr = gy + (static_cast<size_t>(img) * d.cout + c) * M;
            float s = 0.0f;
            for (int i = 0; i < M; ++i) s += gr[i];
            bn->grad[static_cast<size_t>(c)] += s;
          }
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor leaky_relu(const Tensor& x, float slope) {
  return unary_op(
      "leaky_relu", x, [slope](float v) { return v > 0.0f ? v : slope * v; },
      [slope](float v, float) { return v > 0.0f ? 1.0f : slope; });
}

Tensor silu(const Tensor& x) {
  return unary_op(
      "silu", x,
      [](float v) {
        const float s = 1.0f / (1.0f + std::exp(-v));
        return v * s;
      },
      [](float v, float) {
        const float s = 1.0f / (1.0f + std::exp(-v));
        return s * (1.0f + v * (1.0f - s));
      });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      "tanh", x, [](float v) { return std::tanh(v); }, [](float, float y) { return 1.0f - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor log_clamped(const Tensor& x, float floor) {
  if (floor <= 0.0f) op_error("log_clamped", "floor must be positive");
  return unary_op(
      "log_clamped", x, [floor](float v) { return std::log(v > floor ? v : floor); },
      [floor](float v, float) { return v > floor ? 1.0f / v : 0.0f; });
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  int64_t n = 1;
  for (int dimv : shape) n *= dimv;
  if (n != x.numel())
    op_error("reshape", "cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  const bool rec = want_record({&x});
  Tensor out = make_op_output(std::move(shape), rec);
  out.data() = x.data();
  if (rec) {
    NodePtr xn = x.node(), yn = out.node();
    record([xn, yn]() {
      if (yn->grad.empty() || !xn->requires_grad) return;
      xn->ensure_grad();
      for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += yn->grad[i];
    });
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  if (axis != 1 || a.ndim() != 4 || b.ndim() != 4)
    op_error("concat", "only channel concat of 4-d tensors is supported");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    op_error("concat", "incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  const bool rec = want_record({&a, &b});
  Tensor out = make_op_output({n, ca + cb, a.dim(2), a.dim(3)}, rec);
  auto& yv = out.data();
  for (int img = 0; img < n; ++img) {
    std::memcpy(yv.data() + (static_cast<size_t>(img) * (ca + cb)) * hw,
                a.data().data() + static_cast<size_t>(img) * ca * hw, sizeof(float) * ca * hw);
    std::memcpy(yv.data() + (static_cast<size_t>(img) * (ca + cb) + ca) * hw,
                b.data().data() + static_cast<size_t>(img) * cb * hw, sizeof(float) * cb * hw);
  }
  if (rec) {
    NodePtr an = a.node(), bn = b.node(), yn = out.node();
    record([an, bn, yn, n, ca, cb, hw]() {
      if (yn->grad.empty()) return;
      const float* g = yn->grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        for (int img = 0; img < n; ++img) {
          const float* gr = g + (static_cast<size_t>(img) * (ca + cb)) * hw;
          float* dst = an->grad.data() + static_cast<size_t>(img) * ca * hw;
          for (int i = 0; i < ca * hw; ++i) dst[i] += gr[i];
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int img = 0; img < n; ++img) {
          const float* gr = g + (static_cast<size_t>(img) * (ca + cb) + ca) * hw;
          float* dst = bn->grad.data() + static_cast<size_t>(img) * cb * hw;
          for (int i = 0; i < cb * hw; ++i) dst[i] += gr[i];
        }
      }
    });
  }
  return out;
}

Tensor avgpool2(const Tensor& x) {
  if (x.ndim() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
    op_error("avgpool2", "needs a 4-d tensor with even H and W, got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h / 2, ow = w / 2;
  const bool rec = want_record({&x});
  Tensor out = make_op_output({n, c, oh, ow}, rec);
  const float* xv = x.data().data();
  float* yv = out.data().data();
  for (int p = 0; p < n * c; ++p) {
    const float* xp = xv + static_cast<size_t>(p) * h * w;
    float* yp = yv + static_cast<size_t>(p) * oh * ow;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const float* r0 = xp + (2 * oy) * w + 2 * ox;
        const float* r1 = r0 + w;
        yp[oy * ow + ox] = 0.25f * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
  }
  if (rec) {
    NodePtr xn = x.node(), yn = out.node();
    record([xn, yn, n, c, h, w, oh, ow]() {
      if (yn->grad.empty() || !xn->requires_grad) return;
      xn->ensure_grad();
      const float* g = yn->grad.data();
      for (int p = 0; p < n * c; ++p) {
        float* dx = xn->grad.data() + static_cast<size_t>(p) * h * w;
        const float* gp = g + static_cast<size_t>(p) * oh * ow;
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            const float gv = 0.25f * gp[oy * ow + ox];
            dx[(2 * oy) * w + 2 * ox] += gv;
            dx[(2 * oy) * w + 2 * ox + 1] += gv;
            dx[(2 * oy + 1) * w + 2 * ox] += gv;
            dx[(2 * oy + 1) * w + 2 * ox + 1] += gv;
          }
      }
    });
  }
  return out;
}

Tensor nearest_upsample2(const Tensor& x) {
  if (x.ndim() != 4) op_error("nearest_upsample2", "needs a 4-d tensor, got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const bool rec = want_record({&x});
  Tensor out = make_op_output({n, c, 2 * h, 2 * w}, rec);
  const float* xv = x.data().data();
  float* yv = out.data().data();
  for (int p = 0; p < n * c; ++p) {
    const float* xp = xv + static_cast<size_t>(p) * h * w;
    float* yp = yv + static_cast<size_t>(p) * 4 * h * w;
    for (int y = 0; y < h; ++y)
      for (int xcol = 0; xcol < w; ++xcol) {
        const float v = xp[y * w + xcol];
        float* r0 = yp + (2 * y) * 2 * w + 2 * xcol;
        r0[0] = v;
        r0[1] = v;
        r0[2 * w] = v;
        r0[2 * w + 1] = v;
      }
  }
  if (rec) {
    NodePtr xn = x.node(), yn = out.node();
    record([xn, yn, n, c, h, w]() {
      if (yn->grad.empty() || !xn->requires_grad) return;
      xn->ensure_grad();
      const float* g = yn->grad.data();
      for (int p = 0; p < n * c; ++p) {
        float* dx = xn->grad.data() + static_cast<size_t>(p) * h * w;
        const float* gp = g + static_cast<size_t>(p) * 4 * h * w;
        for (int y = 0; y < h; ++y)
          for (int xcol = 0; xcol < w; ++xcol) {
            const float* r0 = gp + (2 * y) * 2 * w + 2 * xcol;
            dx[y * w + xcol] += r0[0] + r0[1] + r0[2 * w] + r0[2 * w + 1];
          }
      }
    });
  }
  return out;
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, float eps) {
  if (x.ndim() != 4) op_error("group_norm", "needs a 4-d tensor, got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (groups < 1 || c % groups != 0)
    op_error("group_norm", std::to_string(groups) + " groups do not divide " + std::to_string(c) +
                               " channels");
  if (gamma.ndim() != 1 || gamma.dim(0) != c || beta.ndim() != 1 || beta.dim(0) != c)
    op_error("group_norm", "affine parameters must be [" + std::to_string(c) + "]");

  const int cg = c / groups;           // channels per group
  const int64_t gsize = static_cast<int64_t>(cg) * h * w;
  const bool rec = want_record({&x, &gamma, &beta});
  Tensor out = make_op_output(x.shape(), rec);

  std::vector<float> mean(static_cast<size_t>(n) * groups);
  std::vector<float> inv_std(static_cast<size_t>(n) * groups);
  const float* xv = x.data().data();
  float* yv = out.data().data();
  const float* gm = gamma.data().data();
  const float* bt = beta.data().data();

  for (int img = 0; img < n; ++img)
    for (int g = 0; g < groups; ++g) {
      const float* xg = xv + (static_cast<size_t>(img) * c + static_cast<size_t>(g) * cg) * h * w;
      double s = 0.0;
      for (int64_t i = 0; i < gsize; ++i) s += xg[i];
      const double mu = s / static_cast<double>(gsize);
      double var = 0.0;
      for (int64_t i = 0; i < gsize; ++i) {
        const double d = xg[i] - mu;
        var += d * d;
      }
      var /= static_cast<double>(gsize);
      const float iv = static_cast<float>(1.0 / std::sqrt(var + eps));
      mean[static_cast<size_t>(img) * groups + g] = static_cast<float>(mu);
      inv_std[static_cast<size_t>(img) * groups + g] = iv;

      float* yg = yv + (static_cast<size_t>(img) * c + static_cast<size_t>(g) * cg) * h * w;
      for (int ch = 0; ch < cg; ++ch) {
        const float gmc = gm[g * cg + ch], btc = bt[g * cg + ch];
        const float* xr = xg + static_cast<size_t>(ch) * h * w;
        float* yr = yg + static_cast<size_t>(ch) * h * w;
        for (int i = 0; i < h * w; ++i)
          yr[i] = gmc * (xr[i] - mean[static_cast<size_t>(img) * groups + g]) * iv + btc;
      }
    }
  check_finite("group_norm", out);

  if (rec) {
    NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node(), yn = out.node();
    record([xn, gn, bn, yn, n, c, h, w, groups, cg, gsize, mean, inv_std]() {
      if (yn->grad.empty()) return;
      const float* g = yn->grad.data();
      const float* xv = xn->value.data();
      const float* gm = gn->value.data();
      const bool need_dx = xn->requires_grad;
      const bool need_dg = gn->requires_grad;
      const bool need_db = bn->requires_grad;
      if (need_dx) xn->ensure_grad();
      if (need_dg) gn->ensure_grad();
      if (need_db) bn->ensure_grad();

      for (int img = 0; img < n; ++img)
        for (int grp = 0; grp < groups; ++grp) {
          const size_t base = (static_cast<size_t>(img) * c + static_cast<size_t>(grp) * cg) *
                              static_cast<size_t>(h) * w;
          const float mu = mean[static_cast<size_t>(img) * groups + grp];
          const float iv = inv_std[static_cast<size_t>(img) * groups + grp];

          double s1 = 0.0, s2 = 0.0;  // sums of dxhat and dxhat*xhat
          for (int ch = 0; ch < cg; ++ch) {
            const float gmc = gm[grp * cg + ch];
            const size_t off = base + static_cast<size_t>(ch) * h * w;
            for (int i = 0; i < h * w; ++i) {
              const float xhat = (xv[off + i] - mu) * iv;
              const float dxh = g[off + i] * gmc;
              s1 += dxh;
              s2 += static_cast<double>(dxh) * xhat;
              if (need_dg) gn->grad[static_cast<size_t>(grp * cg + ch)] += g[off + i] * xhat;
              if (need_db) bn->grad[static_cast<size_t>(grp * cg + ch)] += g[off + i];
            }
          }
          if (need_dx) {
            const float m1 = static_cast<float>(s1 / static_cast<double>(gsize));
            const float m2 = static_cast<float>(s2 / static_cast<double>(gsize));
            for (int ch = 0; ch < cg; ++ch) {
              const float gmc = gm[grp * cg + ch];
              const size_t off = base + static_cast<size_t>(ch) * h * w;
              for (int i = 0; i < h * w; ++i) {
                const float xhat = (xv[off + i] - mu) * iv;
                const float dxh = g[off + i] * gmc;
                xn->grad[off + i] += iv * (dxh - m1 - xhat * m2);
              }
            }
          }
        }
    });
  }
  return out;
}

namespace {

// Shared core of the scalar reductions (mse / l1 / mean_all).
enum class Reduce { Mse, L1, Mean };

Tensor reduce_op(const char* name, Reduce kind, const Tensor& a, const Tensor* b) {
  if (b && a.shape() != b->shape())
    op_error(name, "incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b->shape()));
  const bool rec = b ? want_record({&a, b}) : want_record({&a});
  Tensor out = make_op_output({1}, rec);
  const auto& av = a.data();
  const float* bv = b ? b->data().data() : nullptr;
  const double inv_n = 1.0 / static_cast<double>(av.size());
  double acc = 0.0;
  for (size_t i = 0; i < av.size(); ++i) {
    const double d = bv ? av[i] - bv[i] : av[i];
    switch (kind) {
      case Reduce::Mse: acc += d * d; break;
      case Reduce::L1: acc += std::abs(d); break;
      case Reduce::Mean: acc += d; break;
    }
  }
  out.data()[0] = static_cast<float>(acc * inv_n);
  check_finite(name, out);

  if (rec) {
    NodePtr an = a.node(), yn = out.node();
    NodePtr bn = b ? b->node() : nullptr;
    record([an, bn, yn, kind, inv_n]() {
      if (yn->grad.empty()) return;
      const float gy = yn->grad[0];
      const float* bv = bn ? bn->value.data() : nullptr;
      auto comp = [&](size_t i) -> float {
        const float d = bv ? an->value[i] - bv[i] : an->value[i];
        switch (kind) {
          case Reduce::Mse: return static_cast<float>(2.0 * d * inv_n);
          case Reduce::L1: return static_cast<float>((d > 0.0f ? 1.0 : (d < 0.0f ? -1.0 : 0.0)) * inv_n);
          case Reduce::Mean: return static_cast<float>(inv_n);
        }
        return 0.0f;
      };
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < an->value.size(); ++i) an->grad[i] += gy * comp(i);
      }
      if (bn && bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < bn->value.size(); ++i) bn->grad[i] -= gy * comp(i);
      }
    });
  }
  return out;
}

}  // namespace

Tensor mse(const Tensor& a, const Tensor& b) { return reduce_op("mse", Reduce::Mse, a, &b); }

Tensor l1(const Tensor& a, const Tensor& b) { return reduce_op("l1", Reduce::L1, a, &b); }

Tensor mean_all(const Tensor& x) { return reduce_op("mean_all", Reduce::Mean, x, nullptr); }

Tensor embedding_mean(const Tensor& table, const std::vector<std::vector<int>>& ids) {
  if (table.ndim() != 2) op_error("embedding_mean", "table must be 2-d, got " + shape_str(table.shape()));
  const int v = table.dim(0), d = table.dim(1);
  const int batch = static_cast<int>(ids.size());
  if (batch == 0) op_error("embedding_mean", "empty batch");
  for (const auto& row : ids) {
    if (row.empty()) op_error("embedding_mean", "every id list must be nonempty");
    for (int id : row)
      if (id < 0 || id >= v)
        op_error("embedding_mean", "id " + std::to_string(id) + " outside table " + shape_str(table.shape()));
  }
  const bool rec = want_record({&table});
  Tensor out = make_op_output({batch, d}, rec);
  const float* tv = table.data().data();
  float* yv = out.data().data();
  for (int bidx = 0; bidx < batch; ++bidx) {
    const float invk = 1.0f / static_cast<float>(ids[static_cast<size_t>(bidx)].size());
    float* yr = yv + static_cast<size_t>(bidx) * d;
    for (int id : ids[static_cast<size_t>(bidx)]) {
      const float* tr = tv + static_cast<size_t>(id) * d;
      for (int j = 0; j < d; ++j) yr[j] += tr[j] * invk;
    }
  }
  check_finite("embedding_mean", out);
  if (rec) {
    NodePtr tn = table.node(), yn = out.node();
    record([tn, yn, ids, d]() {
      if (yn->grad.empty() || !tn->requires_grad) return;
      tn->ensure_grad();
      const float* g = yn->grad.data();
      for (size_t bidx = 0; bidx < ids.size(); ++bidx) {
        const float invk = 1.0f / static_cast<float>(ids[bidx].size());
        const float* gr = g + bidx * static_cast<size_t>(d);
        for (int id : ids[bidx]) {
          float* tr = tn->grad.data() + static_cast<size_t>(id) * d;
          for (int j = 0; j < d; ++j) tr[j] += gr[j] * invk;
        }
      }
    });
  }
  return out;
}

}  // namespace inklab
