#include "cdinet/ops.hpp"

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstring>
#include <utility>

namespace cdinet::ops {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::atomic<long> g_upsample_calls{0};

bool any_requires_grad(const std::vector<Var>& parents) {
  for (const auto& p : parents) {
    if (p->requires_grad) return true;
  }
  return false;
}

/// Wrap an op result; records the tape only when gradients are live.
Var make_result(Tensor out, std::vector<Var> parents,
                std::function<void(Node&)> backward_fn) {
  Var node = make_var(std::move(out));
  if (autograd::grad_enabled() && any_requires_grad(parents)) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return node;
}

void im2col(const double* src, int c, int h, int w, int k, int pad,
            double* col) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const int out_h = h + 2 * pad - k + 1;
  const int out_w = w + 2 * pad - k + 1;
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  std::size_t row = 0;
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj, ++row) {
        double* dst = col + row * out_plane;
        const int dy = ki - pad;
        const int dx = kj - pad;
        for (int y = 0; y < out_h; ++y) {
          const int sy = y + dy;
          double* drow = dst + static_cast<std::size_t>(y) * out_w;
          if (sy < 0 || sy >= h) {
            std::memset(drow, 0, sizeof(double) * out_w);
            continue;
          }
          const double* srow = src + static_cast<std::size_t>(ci) * plane +
                               static_cast<std::size_t>(sy) * w;
          for (int x = 0; x < out_w; ++x) {
            const int sx = x + dx;
            drow[x] = (sx >= 0 && sx < w) ? srow[sx] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, int c, int h, int w, int k, int pad,
                double* dst) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const int out_h = h + 2 * pad - k + 1;
  const int out_w = w + 2 * pad - k + 1;
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  std::size_t row = 0;
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj, ++row) {
        const double* src_row = col + row * out_plane;
        const int dy = ki - pad;
        const int dx = kj - pad;
        for (int y = 0; y < out_h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          double* drow = dst + static_cast<std::size_t>(ci) * plane +
                         static_cast<std::size_t>(sy) * w;
          const double* srow = src_row + static_cast<std::size_t>(y) * out_w;
          for (int x = 0; x < out_w; ++x) {
            const int sx = x + dx;
            if (sx >= 0 && sx < w) drow[sx] += srow[x];
          }
        }
      }
    }
  }
}

AlignedBuffer& scratch_buffer(int slot) {
  thread_local AlignedBuffer buffers[2];
  return buffers[slot];
}

struct BilinearTaps {
  std::vector<int> lo, hi;
  std::vector<double> lambda;
};

BilinearTaps bilinear_taps(int in_size, int out_size) {
  BilinearTaps t;
  t.lo.resize(out_size);
  t.hi.resize(out_size);
  t.lambda.resize(out_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int d = 0; d < out_size; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    const int lo = static_cast<int>(src);
    t.lo[d] = lo;
    t.hi[d] = (lo < in_size - 1) ? lo + 1 : lo;
    t.lambda[d] = src - lo;
  }
  return t;
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int pad) {
  const Shape xs = x->value.shape();
  const Shape ws = weight->value.shape();
  const Shape bs = bias->value.shape();
  if (ws.h != ws.w) throw ShapeError("conv2d kernel must be square, got " + ws.str());
  const int k = ws.h;
  if (xs.c != ws.c) {
    throw ShapeError("conv2d channel mismatch: input has " +
                     std::to_string(xs.c) + " channels, weight expects " +
                     std::to_string(ws.c));
  }
  if (bs.n != 1 || bs.c != ws.n || bs.h != 1 || bs.w != 1) {
    throw ShapeError("conv2d bias shape " + bs.str() + " incompatible with " +
                     std::to_string(ws.n) + " output channels");
  }
  const int out_h = xs.h + 2 * pad - k + 1;
  const int out_w = xs.w + 2 * pad - k + 1;
  if (out_h <= 0 || out_w <= 0) {
    throw ShapeError("conv2d output would be empty for input " + xs.str() +
                     " with k=" + std::to_string(k) +
                     " pad=" + std::to_string(pad));
  }
  const int out_c = ws.n;
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  const std::size_t in_block = static_cast<std::size_t>(xs.c) * xs.h * xs.w;
  const int col_rows = xs.c * k * k;

  Tensor out({xs.n, out_c, out_h, out_w});
  ConstMapMat wmat(weight->value.data(), out_c, col_rows);
  const bool pointwise = (k == 1 && pad == 0);
  if (!pointwise) scratch_buffer(0).resize(static_cast<std::size_t>(col_rows) * out_plane);
  for (int n = 0; n < xs.n; ++n) {
    const double* src = x->value.data() + n * in_block;
    MapMat y(out.data() + n * out_c * out_plane, out_c, out_plane);
    if (pointwise) {
      ConstMapMat col(src, col_rows, out_plane);
      y.noalias() = wmat * col;
    } else {
      im2col(src, xs.c, xs.h, xs.w, k, pad, scratch_buffer(0).data());
      ConstMapMat col(scratch_buffer(0).data(), col_rows, out_plane);
      y.noalias() = wmat * col;
    }
    for (int oc = 0; oc < out_c; ++oc) {
      y.row(oc).array() += bias->value[oc];
    }
  }

  return make_result(
      std::move(out), {x, weight, bias}, [k, pad](Node& self) {
        const Var& x = self.parents[0];
        const Var& weight = self.parents[1];
        const Var& bias = self.parents[2];
        const Shape xs = x->value.shape();
        const Shape os = self.value.shape();
        const int out_c = os.c;
        const std::size_t out_plane = static_cast<std::size_t>(os.h) * os.w;
        const std::size_t in_block =
            static_cast<std::size_t>(xs.c) * xs.h * xs.w;
        const int col_rows = xs.c * k * k;
        const bool pointwise = (k == 1 && pad == 0);
        ConstMapMat wmat(weight->value.data(), out_c, col_rows);

        if (!pointwise && (weight->requires_grad || x->requires_grad)) {
          scratch_buffer(0).resize(static_cast<std::size_t>(col_rows) * out_plane);
          scratch_buffer(1).resize(static_cast<std::size_t>(col_rows) * out_plane);
        }
        for (int n = 0; n < xs.n; ++n) {
          ConstMapMat dy(self.grad.data() + n * out_c * out_plane, out_c,
                         out_plane);
          const double* src = x->value.data() + n * in_block;
          if (bias->requires_grad) {
            MapMat db(bias->ensure_grad().data(), 1, out_c);
            for (int oc = 0; oc < out_c; ++oc) db(0, oc) += dy.row(oc).sum();
          }
          if (pointwise) {
            ConstMapMat col(src, col_rows, out_plane);
            if (weight->requires_grad) {
              MapMat dw(weight->ensure_grad().data(), out_c, col_rows);
              dw.noalias() += dy * col.transpose();
            }
            if (x->requires_grad) {
              MapMat dx(x->ensure_grad().data() + n * in_block, col_rows,
                        out_plane);
              dx.noalias() += wmat.transpose() * dy;
            }
          } else {
            if (weight->requires_grad || x->requires_grad) {
              im2col(src, xs.c, xs.h, xs.w, k, pad, scratch_buffer(0).data());
            }
            ConstMapMat col(scratch_buffer(0).data(), col_rows, out_plane);
            if (weight->requires_grad) {
              MapMat dw(weight->ensure_grad().data(), out_c, col_rows);
              dw.noalias() += dy * col.transpose();
            }
            if (x->requires_grad) {
              MapMat dcol(scratch_buffer(1).data(), col_rows, out_plane);
              dcol.noalias() = wmat.transpose() * dy;
              col2im_add(scratch_buffer(1).data(), xs.c, xs.h, xs.w, k, pad,
                         x->ensure_grad().data() + n * in_block);
            }
          }
        }
      });
}

Var max_pool2(const Var& x) {
  const Shape xs = x->value.shape();
  if (xs.h % 2 != 0 || xs.w % 2 != 0) {
    throw ShapeError("max_pool2 requires even spatial dims, got " + xs.str());
  }
  const int oh = xs.h / 2;
  const int ow = xs.w / 2;
  Tensor out({xs.n, xs.c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  std::size_t oi = 0;
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      for (int y = 0; y < oh; ++y) {
        for (int z = 0; z < ow; ++z, ++oi) {
          std::size_t best = x->value.index(n, c, 2 * y, 2 * z);
          double best_v = x->value[best];
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx = x->value.index(n, c, 2 * y + dy, 2 * z + dx);
              if (x->value[idx] > best_v) {
                best_v = x->value[idx];
                best = idx;
              }
            }
          }
          out[oi] = best_v;
          (*argmax)[oi] = best;
        }
      }
    }
  }
  return make_result(std::move(out), {x}, [argmax](Node& self) {
    Var& x = self.parents[0];
    if (!x->requires_grad) return;
    Tensor& dx = x->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      dx[(*argmax)[i]] += self.grad[i];
    }
  });
}

Var channel_max(const Var& x) {
  const Shape xs = x->value.shape();
  Tensor out({xs.n, 1, xs.h, xs.w});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  std::size_t oi = 0;
  for (int n = 0; n < xs.n; ++n) {
    for (int y = 0; y < xs.h; ++y) {
      for (int z = 0; z < xs.w; ++z, ++oi) {
        std::size_t best = x->value.index(n, 0, y, z);
        double best_v = x->value[best];
        for (int c = 1; c < xs.c; ++c) {
          const std::size_t idx = x->value.index(n, c, y, z);
          if (x->value[idx] > best_v) {
            best_v = x->value[idx];
            best = idx;
          }
        }
        out[oi] = best_v;
        (*argmax)[oi] = best;
      }
    }
  }
  return make_result(std::move(out), {x}, [argmax](Node& self) {
    Var& x = self.parents[0];
    if (!x->requires_grad) return;
    Tensor& dx = x->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      dx[(*argmax)[i]] += self.grad[i];
    }
  });
}

Var global_avg_pool(const Var& x) {
  const Shape xs = x->value.shape();
  const std::size_t plane = static_cast<std::size_t>(xs.h) * xs.w;
  Tensor out({xs.n, xs.c, 1, 1});
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      const double* src = x->value.data() + (static_cast<std::size_t>(n) * xs.c + c) * plane;
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += src[i];
      out.at(n, c, 0, 0) = acc / static_cast<double>(plane);
    }
  }
  return make_result(std::move(out), {x}, [](Node& self) {
    Var& x = self.parents[0];
    if (!x->requires_grad) return;
    const Shape xs = x->value.shape();
    const std::size_t plane = static_cast<std::size_t>(xs.h) * xs.w;
    Tensor& dx = x->ensure_grad();
    for (int n = 0; n < xs.n; ++n) {
      for (int c = 0; c < xs.c; ++c) {
        const double g = self.grad.at(n, c, 0, 0) / static_cast<double>(plane);
        double* dst = dx.data() + (static_cast<std::size_t>(n) * xs.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += g;
      }
    }
  });
}

Var fully_connected(const Var& x, const Var& weight, const Var& bias) {
  const Shape xs = x->value.shape();
  const Shape ws = weight->value.shape();
  if (xs.h != 1 || xs.w != 1) {
    throw ShapeError("fully_connected expects (N,C,1,1) input, got " + xs.str());
  }
  if (ws.c != xs.c || ws.h != 1 || ws.w != 1) {
    throw ShapeError("fully_connected weight " + ws.str() +
                     " incompatible with input " + xs.str());
  }
  const int m = ws.n;
  Tensor out({xs.n, m, 1, 1});
  ConstMapMat xin(x->value.data(), xs.n, xs.c);
  ConstMapMat w(weight->value.data(), m, xs.c);
  MapMat y(out.data(), xs.n, m);
  y.noalias() = xin * w.transpose();
  for (int n = 0; n < xs.n; ++n) {
    for (int j = 0; j < m; ++j) y(n, j) += bias->value[j];
  }
  return make_result(std::move(out), {x, weight, bias}, [](Node& self) {
    Var& x = self.parents[0];
    Var& weight = self.parents[1];
    Var& bias = self.parents[2];
    const Shape xs = x->value.shape();
    const int m = weight->value.shape().n;
    ConstMapMat dy(self.grad.data(), xs.n, m);
    ConstMapMat xin(x->value.data(), xs.n, xs.c);
    ConstMapMat w(weight->value.data(), m, xs.c);
    if (bias->requires_grad) {
      MapMat db(bias->ensure_grad().data(), 1, m);
      db.noalias() += dy.colwise().sum();
    }
    if (weight->requires_grad) {
      MapMat dw(weight->ensure_grad().data(), m, xs.c);
      dw.noalias() += dy.transpose() * xin;
    }
    if (x->requires_grad) {
      MapMat dx(x->ensure_grad().data(), xs.n, xs.c);
      dx.noalias() += dy * w;
    }
  });
}

Var relu(const Var& x) {
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x->value[i] > 0.0 ? x->value[i] : 0.0;
  }
  return make_result(std::move(out), {x}, [](Node& self) {
    Var& x = self.parents[0];
    if (!x->requires_grad) return;
    Tensor& dx = x->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (x->value[i] > 0.0) dx[i] += self.grad[i];
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 1.0 / (1.0 + std::exp(-x->value[i]));
  }
  return make_result(std::move(out), {x}, [](Node& self) {
    Var& x = self.parents[0];
    if (!x->requires_grad) return;
    Tensor& dx = x->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double y = self.value[i];
      dx[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Var add(const Var& a, const Var& b) {
  if (a->value.shape() != b->value.shape()) {
    throw ShapeError("add shape mismatch: " + a->value.shape().str() + " vs " +
                     b->value.shape().str());
  }
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a->value[i] + b->value[i];
  }
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (int p = 0; p < 2; ++p) {
      Var& v = self.parents[p];
      if (!v->requires_grad) continue;
      Tensor& dv = v->ensure_grad();
      for (std::size_t i = 0; i < dv.size(); ++i) dv[i] += self.grad[i];
    }
  });
}

namespace {
enum class MulMode { same, spatial_mask, channel_weights };
}

Var mul(const Var& a, const Var& b) {
  const Shape as = a->value.shape();
  const Shape bs = b->value.shape();
  MulMode mode;
  if (as == bs) {
    mode = MulMode::same;
  } else if (bs.n == as.n && bs.c == 1 && bs.h == as.h && bs.w == as.w) {
    mode = MulMode::spatial_mask;
  } else if (bs.n == as.n && bs.c == as.c && bs.h == 1 && bs.w == 1) {
    mode = MulMode::channel_weights;
  } else {
    throw ShapeError("mul cannot broadcast " + bs.str() + " over " + as.str());
  }

  const std::size_t plane = static_cast<std::size_t>(as.h) * as.w;
  Tensor out(as);
  for (int n = 0; n < as.n; ++n) {
    for (int c = 0; c < as.c; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * as.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        double bv;
        switch (mode) {
          case MulMode::same: bv = b->value[off + i]; break;
          case MulMode::spatial_mask:
            bv = b->value[static_cast<std::size_t>(n) * plane + i];
            break;
          default: bv = b->value[static_cast<std::size_t>(n) * as.c + c];
        }
        out[off + i] = a->value[off + i] * bv;
      }
    }
  }
  return make_result(std::move(out), {a, b}, [mode](Node& self) {
    Var& a = self.parents[0];
    Var& b = self.parents[1];
    const Shape as = a->value.shape();
    const std::size_t plane = static_cast<std::size_t>(as.h) * as.w;
    Tensor* da = a->requires_grad ? &a->ensure_grad() : nullptr;
    Tensor* db = b->requires_grad ? &b->ensure_grad() : nullptr;
    for (int n = 0; n < as.n; ++n) {
      for (int c = 0; c < as.c; ++c) {
        const std::size_t off = (static_cast<std::size_t>(n) * as.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          std::size_t bi;
          switch (mode) {
            case MulMode::same: bi = off + i; break;
            case MulMode::spatial_mask:
              bi = static_cast<std::size_t>(n) * plane + i;
              break;
            default: bi = static_cast<std::size_t>(n) * as.c + c;
          }
          const double g = self.grad[off + i];
          if (da) (*da)[off + i] += g * b->value[bi];
          if (db) (*db)[bi] += g * a->value[off + i];
        }
      }
    }
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels on empty input list");
  const Shape first = xs[0]->value.shape();
  int total_c = 0;
  for (const auto& x : xs) {
    const Shape s = x->value.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat_channels mismatch: " + s.str() + " vs " +
                       first.str());
    }
    total_c += s.c;
  }
  const std::size_t plane = static_cast<std::size_t>(first.h) * first.w;
  Tensor out({first.n, total_c, first.h, first.w});
  for (int n = 0; n < first.n; ++n) {
    std::size_t dst_off = static_cast<std::size_t>(n) * total_c * plane;
    for (const auto& x : xs) {
      const std::size_t block = static_cast<std::size_t>(x->value.shape().c) * plane;
      std::memcpy(out.data() + dst_off, x->value.data() + n * block,
                  block * sizeof(double));
      dst_off += block;
    }
  }
  return make_result(std::move(out), xs, [](Node& self) {
    const Shape os = self.value.shape();
    const std::size_t plane = static_cast<std::size_t>(os.h) * os.w;
    for (int n = 0; n < os.n; ++n) {
      std::size_t src_off = static_cast<std::size_t>(n) * os.c * plane;
      for (auto& x : self.parents) {
        const std::size_t block = static_cast<std::size_t>(x->value.shape().c) * plane;
        if (x->requires_grad) {
          Tensor& dx = x->ensure_grad();
          double* dst = dx.data() + n * block;
          const double* src = self.grad.data() + src_off;
          for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
        src_off += block;
      }
    }
  });
}

Var upsample_bilinear(const Var& x, int out_h, int out_w) {
  g_upsample_calls.fetch_add(1, std::memory_order_relaxed);
  const Shape xs = x->value.shape();
  if (out_h <= 0 || out_w <= 0) {
    throw ShapeError("upsample_bilinear target must be positive");
  }
  auto ty = std::make_shared<BilinearTaps>(bilinear_taps(xs.h, out_h));
  auto tx = std::make_shared<BilinearTaps>(bilinear_taps(xs.w, out_w));
  Tensor out({xs.n, xs.c, out_h, out_w});
  const std::size_t in_plane = static_cast<std::size_t>(xs.h) * xs.w;
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      const double* src = x->value.data() + (static_cast<std::size_t>(n) * xs.c + c) * in_plane;
      double* dst = out.data() + (static_cast<std::size_t>(n) * xs.c + c) * out_plane;
      for (int y = 0; y < out_h; ++y) {
        const double ly = ty->lambda[y];
        const double* r0 = src + static_cast<std::size_t>(ty->lo[y]) * xs.w;
        const double* r1 = src + static_cast<std::size_t>(ty->hi[y]) * xs.w;
        for (int z = 0; z < out_w; ++z) {
          const double lx = tx->lambda[z];
          const double top = r0[tx->lo[z]] * (1.0 - lx) + r0[tx->hi[z]] * lx;
          const double bot = r1[tx->lo[z]] * (1.0 - lx) + r1[tx->hi[z]] * lx;
          dst[static_cast<std::size_t>(y) * out_w + z] =
              top * (1.0 - ly) + bot * ly;
        }
      }
    }
  }
  return make_result(std::move(out), {x}, [ty, tx](Node& self) {
    Var& x = self.parents[0];
    if (!x->requires_grad) return;
    const Shape xs = x->value.shape();
    const Shape os = self.value.shape();
    const std::size_t in_plane = static_cast<std::size_t>(xs.h) * xs.w;
    const std::size_t out_plane = static_cast<std::size_t>(os.h) * os.w;
    Tensor& dx = x->ensure_grad();
    for (int n = 0; n < xs.n; ++n) {
      for (int c = 0; c < xs.c; ++c) {
        double* dst = dx.data() + (static_cast<std::size_t>(n) * xs.c + c) * in_plane;
        const double* g = self.grad.data() + (static_cast<std::size_t>(n) * xs.c + c) * out_plane;
        for (int y = 0; y < os.h; ++y) {
          const double ly = ty->lambda[y];
          double* r0 = dst + static_cast<std::size_t>(ty->lo[y]) * xs.w;
          double* r1 = dst + static_cast<std::size_t>(ty->hi[y]) * xs.w;
          for (int z = 0; z < os.w; ++z) {
            const double lx = tx->lambda[z];
            const double gv = g[static_cast<std::size_t>(y) * os.w + z];
            r0[tx->lo[z]] += gv * (1.0 - ly) * (1.0 - lx);
            r0[tx->hi[z]] += gv * (1.0 - ly) * lx;
            r1[tx->lo[z]] += gv * ly * (1.0 - lx);
            r1[tx->hi[z]] += gv * ly * lx;
          }
        }
      }
    }
  });
}

Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Shape xs = x->value.shape();
  const Shape gs = gamma->value.shape();
  if (gs.n != 1 || gs.c != xs.c || gs.h != 1 || gs.w != 1 ||
      beta->value.shape() != gs) {
    throw ShapeError("instance_norm affine params must be (1,C,1,1)");
  }
  const std::size_t plane = static_cast<std::size_t>(xs.h) * xs.w;
  Tensor out(xs);
  auto inv_std = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(xs.n) * xs.c);
  auto mean = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(xs.n) * xs.c);
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * xs.c + c) * plane;
      double mu = 0.0;
      for (std::size_t i = 0; i < plane; ++i) mu += x->value[off + i];
      mu /= static_cast<double>(plane);
      double var = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = x->value[off + i] - mu;
        var += d * d;
      }
      var /= static_cast<double>(plane);
      const double is = 1.0 / std::sqrt(var + eps);
      (*mean)[static_cast<std::size_t>(n) * xs.c + c] = mu;
      (*inv_std)[static_cast<std::size_t>(n) * xs.c + c] = is;
      const double g = gamma->value[c];
      const double b = beta->value[c];
      for (std::size_t i = 0; i < plane; ++i) {
        out[off + i] = (x->value[off + i] - mu) * is * g + b;
      }
    }
  }
  return make_result(std::move(out), {x, gamma, beta}, [mean, inv_std](Node& self) {
    Var& x = self.parents[0];
    Var& gamma = self.parents[1];
    Var& beta = self.parents[2];
    const Shape xs = x->value.shape();
    const std::size_t plane = static_cast<std::size_t>(xs.h) * xs.w;
    Tensor* dg = gamma->requires_grad ? &gamma->ensure_grad() : nullptr;
    Tensor* db = beta->requires_grad ? &beta->ensure_grad() : nullptr;
    Tensor* dx = x->requires_grad ? &x->ensure_grad() : nullptr;
    std::vector<double> xhat(plane);
    for (int n = 0; n < xs.n; ++n) {
      for (int c = 0; c < xs.c; ++c) {
        const std::size_t off = (static_cast<std::size_t>(n) * xs.c + c) * plane;
        const double mu = (*mean)[static_cast<std::size_t>(n) * xs.c + c];
        const double is = (*inv_std)[static_cast<std::size_t>(n) * xs.c + c];
        for (std::size_t i = 0; i < plane; ++i) {
          xhat[i] = (x->value[off + i] - mu) * is;
        }
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
          const double g = self.grad[off + i];
          sum_dy += g;
          sum_dy_xhat += g * xhat[i];
        }
        if (dg) (*dg)[c] += sum_dy_xhat;
        if (db) (*db)[c] += sum_dy;
        if (dx) {
          const double gw = gamma->value[c];
          const double m = static_cast<double>(plane);
          for (std::size_t i = 0; i < plane; ++i) {
            const double dxhat = self.grad[off + i] * gw;
            (*dx)[off + i] += is * (dxhat - (gw * sum_dy) / m -
                                    xhat[i] * (gw * sum_dy_xhat) / m);
          }
        }
      }
    }
  });
}

Var bce_mean(const Var& pred, const Tensor& target, double clamp_eps) {
  if (pred->value.shape() != target.shape()) {
    throw ShapeError("bce_mean shape mismatch: " + pred->value.shape().str() +
                     " vs " + target.shape().str());
  }
  const std::size_t m = pred->value.size();
  const double lo = clamp_eps;
  const double hi = 1.0 - clamp_eps;
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double p = pred->value[i];
    p = p < lo ? lo : (p > hi ? hi : p);
    const double g = target[i];
    acc -= g * std::log(p) + (1.0 - g) * std::log(1.0 - p);
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(m));
  auto target_copy = std::make_shared<Tensor>(target);
  return make_result(std::move(out), {pred}, [target_copy, lo, hi](Node& self) {
    Var& pred = self.parents[0];
    if (!pred->requires_grad) return;
    Tensor& dp = pred->ensure_grad();
    const double upstream = self.grad[0];
    const double m = static_cast<double>(dp.size());
    for (std::size_t i = 0; i < dp.size(); ++i) {
      const double p = pred->value[i];
      if (p <= lo || p >= hi) continue;  // clamp region, zero slope
      const double g = (*target_copy)[i];
      dp[i] += upstream * (p - g) / (p * (1.0 - p) * m);
    }
  });
}

Var sum(const Var& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x->value.size(); ++i) acc += x->value[i];
  return make_result(Tensor::scalar(acc), {x}, [](Node& self) {
    Var& x = self.parents[0];
    if (!x->requires_grad) return;
    Tensor& dx = x->ensure_grad();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
  });
}

long upsample_call_count() {
  return g_upsample_calls.load(std::memory_order_relaxed);
}

void reset_upsample_call_count() {
  g_upsample_calls.store(0, std::memory_order_relaxed);
}

}  // namespace cdinet::ops
