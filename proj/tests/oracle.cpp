#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oracle {

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int pad) {
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  const int k = ws.h;
  const int oh = xs.h + 2 * pad - k + 1;
  const int ow = xs.w + 2 * pad - k + 1;
  Tensor out({xs.n, ws.n, oh, ow});
  for (int n = 0; n < xs.n; ++n) {
    for (int oc = 0; oc < ws.n; ++oc) {
      for (int y = 0; y < oh; ++y) {
        for (int z = 0; z < ow; ++z) {
          double acc = b.at(0, oc, 0, 0);
          for (int ic = 0; ic < xs.c; ++ic) {
            for (int ki = 0; ki < k; ++ki) {
              for (int kj = 0; kj < k; ++kj) {
                const int sy = y + ki - pad;
                const int sx = z + kj - pad;
                if (sy < 0 || sy >= xs.h || sx < 0 || sx >= xs.w) continue;
                acc += x.at(n, ic, sy, sx) * w.at(oc, ic, ki, kj);
              }
            }
          }
          out.at(n, oc, y, z) = acc;
        }
      }
    }
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0 ? x[i] : 0.0;
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = 1.0 / (1.0 + std::exp(-x[i]));
  }
  return out;
}

Tensor channel_max(const Tensor& x) {
  const Shape s = x.shape();
  Tensor out({s.n, 1, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    for (int y = 0; y < s.h; ++y) {
      for (int z = 0; z < s.w; ++z) {
        double best = x.at(n, 0, y, z);
        for (int c = 1; c < s.c; ++c) best = std::max(best, x.at(n, c, y, z));
        out.at(n, 0, y, z) = best;
      }
    }
  }
  return out;
}

Tensor max_pool2(const Tensor& x) {
  const Shape s = x.shape();
  Tensor out({s.n, s.c, s.h / 2, s.w / 2});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h / 2; ++y) {
        for (int z = 0; z < s.w / 2; ++z) {
          double best = -std::numeric_limits<double>::infinity();
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              best = std::max(best, x.at(n, c, 2 * y + dy, 2 * z + dx));
            }
          }
          out.at(n, c, y, z) = best;
        }
      }
    }
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  const Shape s = x.shape();
  Tensor out({s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      double acc = 0.0;
      for (int y = 0; y < s.h; ++y) {
        for (int z = 0; z < s.w; ++z) acc += x.at(n, c, y, z);
      }
      out.at(n, c, 0, 0) = acc / (static_cast<double>(s.h) * s.w);
    }
  }
  return out;
}

Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& b) {
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  Tensor out({xs.n, ws.n, 1, 1});
  for (int n = 0; n < xs.n; ++n) {
    for (int m = 0; m < ws.n; ++m) {
      double acc = b.at(0, m, 0, 0);
      for (int c = 0; c < xs.c; ++c) {
        acc += x.at(n, c, 0, 0) * w.at(m, c, 0, 0);
      }
      out.at(n, m, 0, 0) = acc;
    }
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor mul_spatial(const Tensor& a, const Tensor& m) {
  const Shape s = a.shape();
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h; ++y) {
        for (int z = 0; z < s.w; ++z) {
          out.at(n, c, y, z) = a.at(n, c, y, z) * m.at(n, 0, y, z);
        }
      }
    }
  }
  return out;
}

Tensor mul_channel(const Tensor& a, const Tensor& w) {
  const Shape s = a.shape();
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h; ++y) {
        for (int z = 0; z < s.w; ++z) {
          out.at(n, c, y, z) = a.at(n, c, y, z) * w.at(n, c, 0, 0);
        }
      }
    }
  }
  return out;
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  const Shape first = xs.front().shape();
  int total_c = 0;
  for (const auto& x : xs) total_c += x.shape().c;
  Tensor out({first.n, total_c, first.h, first.w});
  for (int n = 0; n < first.n; ++n) {
    int oc = 0;
    for (const auto& x : xs) {
      for (int c = 0; c < x.shape().c; ++c, ++oc) {
        for (int y = 0; y < first.h; ++y) {
          for (int z = 0; z < first.w; ++z) {
            out.at(n, oc, y, z) = x.at(n, c, y, z);
          }
        }
      }
    }
  }
  return out;
}

Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w) {
  const Shape s = x.shape();
  Tensor out({s.n, s.c, out_h, out_w});
  const double sy = static_cast<double>(s.h) / out_h;
  const double sx = static_cast<double>(s.w) / out_w;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        if (fy < 0) fy = 0;
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, s.h - 1);
        const double ly = fy - y0;
        for (int z = 0; z < out_w; ++z) {
          double fx = (z + 0.5) * sx - 0.5;
          if (fx < 0) fx = 0;
          const int x0 = static_cast<int>(fx);
          const int x1 = std::min(x0 + 1, s.w - 1);
          const double lx = fx - x0;
          out.at(n, c, y, z) =
              x.at(n, c, y0, x0) * (1 - ly) * (1 - lx) +
              x.at(n, c, y0, x1) * (1 - ly) * lx +
              x.at(n, c, y1, x0) * ly * (1 - lx) +
              x.at(n, c, y1, x1) * ly * lx;
        }
      }
    }
  }
  return out;
}

double bce_mean(const Tensor& pred, const Tensor& gt, double clamp_eps) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double p = std::clamp(pred[i], clamp_eps, 1.0 - clamp_eps);
    acc -= gt[i] * std::log(p) + (1.0 - gt[i]) * std::log(1.0 - p);
  }
  return acc / static_cast<double>(pred.size());
}

std::pair<double, double> precision_recall(const Tensor& pred,
                                           const Tensor& gt,
                                           double threshold) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] > threshold;
    const bool g = gt[i] > 0.5;
    tp += (p && g) ? 1 : 0;
    fp += (p && !g) ? 1 : 0;
    fn += (!p && g) ? 1 : 0;
  }
  const double precision = (tp + fp) == 0 ? 1.0 : tp / (tp + fp);
  const double recall = (tp + fn) == 0 ? 1.0 : tp / (tp + fn);
  return {precision, recall};
}

double f_measure(double precision, double recall, double beta2) {
  const double denom = beta2 * precision + recall;
  return denom == 0.0 ? 0.0 : (1.0 + beta2) * precision * recall / denom;
}

double max_f_measure(const Tensor& pred, const Tensor& gt) {
  double best = 0.0;
  for (int k = 0; k < 255; ++k) {
    const auto [p, r] = precision_recall(pred, gt, k / 255.0);
    best = std::max(best, f_measure(p, r));
  }
  return best;
}

double mae(const Tensor& pred, const Tensor& gt) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    acc += std::abs(pred[i] - gt[i]);
  }
  return acc / static_cast<double>(pred.size());
}

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

std::vector<double> region_values(const Tensor& t, const Tensor& gt,
                                  bool inside, bool complement_values) {
  std::vector<double> out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const bool sel = inside ? gt[i] > 0.5 : gt[i] <= 0.5;
    if (sel) out.push_back(complement_values ? 1.0 - t[i] : t[i]);
  }
  return out;
}

double vec_mean(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

double vec_sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = vec_mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

double object_term(const std::vector<double>& values) {
  const double x = vec_mean(values);
  const double sigma = vec_sample_std(values);
  return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

struct Rect {
  int y0, y1, x0, x1;
};

double region_ssim_ref(const Tensor& pred, const Tensor& gt, Rect r) {
  std::vector<double> ps, gs;
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) {
      ps.push_back(pred.at(0, 0, y, x));
      gs.push_back(gt.at(0, 0, y, x));
    }
  }
  if (ps.empty()) return 0.0;
  const double n = static_cast<double>(ps.size());
  const double mx = vec_mean(ps);
  const double my = vec_mean(gs);
  double vx = 0, vy = 0, cxy = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    vx += (ps[i] - mx) * (ps[i] - mx);
    vy += (gs[i] - my) * (gs[i] - my);
    cxy += (ps[i] - mx) * (gs[i] - my);
  }
  vx /= n - 1 + kEps;
  vy /= n - 1 + kEps;
  cxy /= n - 1 + kEps;
  const double num = 4.0 * mx * my * cxy;
  const double den = (mx * mx + my * my) * (vx + vy);
  if (num != 0.0) return num / (den + kEps);
  return den == 0.0 ? 1.0 : 0.0;
}

}  // namespace

double s_measure(const Tensor& pred, const Tensor& gt, double alpha) {
  double gt_mean = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) gt_mean += gt[i];
  gt_mean /= static_cast<double>(gt.size());
  double pred_mean = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) pred_mean += pred[i];
  pred_mean /= static_cast<double>(pred.size());

  if (gt_mean == 0.0) return std::clamp(1.0 - pred_mean, 0.0, 1.0);
  if (gt_mean == 1.0) return std::clamp(pred_mean, 0.0, 1.0);

  // object term
  const auto fg = region_values(pred, gt, true, false);
  const auto bg = region_values(pred, gt, false, true);
  const double so = gt_mean * object_term(fg) + (1.0 - gt_mean) * object_term(bg);

  // region term
  const Shape s = gt.shape();
  double total = 0.0, mx = 0.0, my = 0.0;
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      const double v = gt.at(0, 0, y, x);
      total += v;
      mx += v * (x + 1);
      my += v * (y + 1);
    }
  }
  int cx, cy;
  if (total == 0.0) {
    cx = static_cast<int>(std::lround(s.w / 2.0));
    cy = static_cast<int>(std::lround(s.h / 2.0));
  } else {
    cx = static_cast<int>(std::lround(mx / total));
    cy = static_cast<int>(std::lround(my / total));
  }
  const double area = static_cast<double>(s.h) * s.w;
  const Rect rects[4] = {{0, cy, 0, cx},
                         {0, cy, cx, s.w},
                         {cy, s.h, 0, cx},
                         {cy, s.h, cx, s.w}};
  double sr = 0.0;
  for (const Rect& r : rects) {
    const double weight =
        static_cast<double>(r.y1 - r.y0) * (r.x1 - r.x0) / area;
    sr += weight * region_ssim_ref(pred, gt, r);
  }

  return std::clamp(alpha * so + (1.0 - alpha) * sr, 0.0, 1.0);
}

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace oracle
