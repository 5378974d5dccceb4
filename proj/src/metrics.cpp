#include "cdinet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cdinet/errors.hpp"

namespace cdinet {

namespace fs = std::filesystem;

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

void check_pair(const SaliencyPair& pair) {
  if (pair.pred.shape() != pair.gt.shape()) {
    throw ShapeError("saliency pair shape mismatch: " +
                     pair.pred.shape().str() + " vs " + pair.gt.shape().str());
  }
}

double mean_of(const Tensor& t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += t[i];
  return acc / static_cast<double>(t.size());
}

/// 2x/(x^2 + 1 + sigma + eps) over the region where mask is set;
/// mean/std use the region's values, std with N-1 normalization.
double object_score(const Tensor& pred, const Tensor& gt, bool foreground) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool in_region = foreground ? gt[i] > 0.5 : gt[i] <= 0.5;
    if (!in_region) continue;
    sum += foreground ? pred[i] : 1.0 - pred[i];
    ++n;
  }
  if (n == 0) return 0.0;
  const double x = sum / static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool in_region = foreground ? gt[i] > 0.5 : gt[i] <= 0.5;
    if (!in_region) continue;
    const double v = (foreground ? pred[i] : 1.0 - pred[i]) - x;
    var += v * v;
  }
  const double sigma = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
  return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

double s_object(const Tensor& pred, const Tensor& gt) {
  const double u = mean_of(gt);
  const double o_fg = object_score(pred, gt, /*foreground=*/true);
  const double o_bg = object_score(pred, gt, /*foreground=*/false);
  return u * o_fg + (1.0 - u) * o_bg;
}

/// Region SSIM on a rectangle [y0,y1) x [x0,x1); empty regions score 0.
double region_ssim(const Tensor& pred, const Tensor& gt, int y0, int y1,
                   int x0, int x1) {
  const std::size_t n = static_cast<std::size_t>(y1 - y0) * (x1 - x0);
  if (n == 0) return 0.0;
  double sum_p = 0.0, sum_g = 0.0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      sum_p += pred.at(0, 0, y, x);
      sum_g += gt.at(0, 0, y, x);
    }
  }
  const double mp = sum_p / static_cast<double>(n);
  const double mg = sum_g / static_cast<double>(n);
  double var_p = 0.0, var_g = 0.0, cov = 0.0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const double dp = pred.at(0, 0, y, x) - mp;
      const double dg = gt.at(0, 0, y, x) - mg;
      var_p += dp * dp;
      var_g += dg * dg;
      cov += dp * dg;
    }
  }
  const double denom = static_cast<double>(n) - 1.0 + kEps;
  var_p /= denom;
  var_g /= denom;
  cov /= denom;
  const double a = 4.0 * mp * mg * cov;
  const double b = (mp * mp + mg * mg) * (var_p + var_g);
  if (a != 0.0) return a / (b + kEps);
  return b == 0.0 ? 1.0 : 0.0;
}

double s_region(const Tensor& pred, const Tensor& gt) {
  const Shape s = gt.shape();
  const int hei = s.h;
  const int wid = s.w;
  // Ground-truth centroid, cx/cy counted as the size of the left/top part
  // (all-zero masks split at the center).
  double total = 0.0;
  std::vector<double> col_sum(wid, 0.0), row_sum(hei, 0.0);
  for (int y = 0; y < hei; ++y) {
    for (int x = 0; x < wid; ++x) {
      const double v = gt.at(0, 0, y, x);
      total += v;
      col_sum[x] += v;
      row_sum[y] += v;
    }
  }
  int cx, cy;
  if (total == 0.0) {
    cx = static_cast<int>(std::lround(wid / 2.0));
    cy = static_cast<int>(std::lround(hei / 2.0));
  } else {
    double mx = 0.0, my = 0.0;
    for (int x = 0; x < wid; ++x) mx += col_sum[x] * (x + 1);
    for (int y = 0; y < hei; ++y) my += row_sum[y] * (y + 1);
    cx = static_cast<int>(std::lround(mx / total));
    cy = static_cast<int>(std::lround(my / total));
  }

  const double area = static_cast<double>(wid) * hei;
  const double w1 = (static_cast<double>(cx) * cy) / area;
  const double w2 = (static_cast<double>(wid - cx) * cy) / area;
  const double w3 = (static_cast<double>(cx) * (hei - cy)) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  const double q1 = region_ssim(pred, gt, 0, cy, 0, cx);
  const double q2 = region_ssim(pred, gt, 0, cy, cx, wid);
  const double q3 = region_ssim(pred, gt, cy, hei, 0, cx);
  const double q4 = region_ssim(pred, gt, cy, hei, cx, wid);
  return w1 * q1 + w2 * q2 + w3 * q3 + w4 * q4;
}

}  // namespace

std::pair<double, double> precision_recall(const SaliencyPair& pair,
                                           double threshold) {
  check_pair(pair);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pair.pred.size(); ++i) {
    const bool p = pair.pred[i] > threshold;
    const bool g = pair.gt[i] > 0.5;
    if (p && g) ++tp;
    else if (p && !g) ++fp;
    else if (!p && g) ++fn;
  }
  const double precision =
      (tp + fp) == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp);
  const double recall =
      (tp + fn) == 0 ? 1.0 : static_cast<double>(tp) / (tp + fn);
  return {precision, recall};
}

double f_measure(double precision, double recall, double beta2) {
  const double denom = beta2 * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + beta2) * precision * recall / denom;
}

double max_f_measure(const SaliencyPair& pair) {
  double best = 0.0;
  for (int k = 0; k < kThresholdCount; ++k) {
    const auto [p, r] = precision_recall(pair, threshold_level(k));
    best = std::max(best, f_measure(p, r));
  }
  return best;
}

double mae(const SaliencyPair& pair) {
  check_pair(pair);
  double acc = 0.0;
  for (std::size_t i = 0; i < pair.pred.size(); ++i) {
    acc += std::abs(pair.pred[i] - pair.gt[i]);
  }
  return acc / static_cast<double>(pair.pred.size());
}

double s_measure(const SaliencyPair& pair, double alpha) {
  check_pair(pair);
  const double y = mean_of(pair.gt);
  double q;
  if (y == 0.0) {
    q = 1.0 - mean_of(pair.pred);
  } else if (y == 1.0) {
    q = mean_of(pair.pred);
  } else {
    q = alpha * s_object(pair.pred, pair.gt) +
        (1.0 - alpha) * s_region(pair.pred, pair.gt);
  }
  return std::clamp(q, 0.0, 1.0);
}

ImageMetrics score_pair(const SaliencyPair& pair) {
  ImageMetrics m;
  m.mae = mae(pair);
  m.s_measure = s_measure(pair);
  double best_f = 0.0;
  for (int k = 0; k < kThresholdCount; ++k) {
    const auto [p, r] = precision_recall(pair, threshold_level(k));
    m.precision[k] = p;
    m.recall[k] = r;
    best_f = std::max(best_f, f_measure(p, r));
  }
  m.max_f = best_f;
  return m;
}

namespace {

const char* kImageExts[] = {".png", ".jpg", ".jpeg", ".PNG", ".JPG", ".JPEG"};

bool is_image_file(const fs::path& p) {
  const std::string ext = p.extension().string();
  return std::any_of(std::begin(kImageExts), std::end(kImageExts),
                     [&](const char* e) { return ext == e; });
}

Tensor load_gray(const fs::path& path, bool binarize) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (img.empty()) throw IoError("unreadable image: " + path.string());
  if (img.channels() != 1) {
    cv::cvtColor(img, img, cv::COLOR_BGR2GRAY);
  }
  cv::Mat d;
  const double scale = img.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
  img.convertTo(d, CV_64F, scale);
  Tensor t({1, 1, d.rows, d.cols});
  for (int y = 0; y < d.rows; ++y) {
    for (int x = 0; x < d.cols; ++x) {
      const double v = d.at<double>(y, x);
      t.at(0, 0, y, x) = binarize ? (v >= 0.5 ? 1.0 : 0.0) : v;
    }
  }
  return t;
}

Tensor resize_bilinear_map(const Tensor& t, int h, int w) {
  const Shape s = t.shape();
  cv::Mat src(s.h, s.w, CV_64F);
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) src.at<double>(y, x) = t.at(0, 0, y, x);
  }
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(w, h), 0, 0, cv::INTER_LINEAR);
  Tensor out({1, 1, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out.at(0, 0, y, x) = std::clamp(dst.at<double>(y, x), 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace

DatasetReport evaluate_dataset(const fs::path& pred_dir, const fs::path& gt_dir,
                               const std::string& dataset_name) {
  if (!fs::is_directory(pred_dir)) {
    throw IoError("prediction directory not found: " + pred_dir.string());
  }
  if (!fs::is_directory(gt_dir)) {
    throw IoError("ground-truth directory not found: " + gt_dir.string());
  }
  std::map<std::string, fs::path> preds, gts;
  for (const auto& e : fs::directory_iterator(pred_dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) {
      preds[e.path().stem().string()] = e.path();
    }
  }
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) {
      gts[e.path().stem().string()] = e.path();
    }
  }
  for (const auto& [stem, path] : preds) {
    if (!gts.count(stem)) {
      std::cerr << "[warn] prediction without ground truth, skipped: " << stem
                << "\n";
    }
  }

  DatasetReport report;
  report.dataset = dataset_name;
  std::size_t matched = 0;
  for (const auto& [stem, gt_path] : gts) {
    auto it = preds.find(stem);
    if (it == preds.end()) {
      std::cerr << "[warn] ground truth without prediction, skipped: " << stem
                << "\n";
      continue;
    }
    SaliencyPair pair;
    pair.gt = load_gray(gt_path, /*binarize=*/true);
    pair.pred = load_gray(it->second, /*binarize=*/false);
    const Shape gs = pair.gt.shape();
    if (pair.pred.shape() != gs) {
      pair.pred = resize_bilinear_map(pair.pred, gs.h, gs.w);
    }
    ImageMetrics m = score_pair(pair);
    report.mae += m.mae;
    report.s_measure += m.s_measure;
    for (int k = 0; k < kThresholdCount; ++k) {
      report.precision[k] += m.precision[k];
      report.recall[k] += m.recall[k];
    }
    report.per_image.emplace(stem, std::move(m));
    ++matched;
  }
  if (matched == 0) {
    throw IoError("no filename stems shared between " + pred_dir.string() +
                  " and " + gt_dir.string());
  }
  report.mae /= static_cast<double>(matched);
  report.s_measure /= static_cast<double>(matched);
  double best_f = 0.0;
  for (int k = 0; k < kThresholdCount; ++k) {
    report.precision[k] /= static_cast<double>(matched);
    report.recall[k] /= static_cast<double>(matched);
    best_f = std::max(best_f, f_measure(report.precision[k], report.recall[k]));
  }
  report.max_f = best_f;
  return report;
}

nlohmann::json report_to_json(const std::vector<DatasetReport>& reports,
                              const nlohmann::json& identifiers) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["tool"] = "cdinet eval";
  if (!identifiers.empty()) j["identifiers"] = identifiers;
  nlohmann::json datasets = nlohmann::json::object();
  for (const auto& r : reports) {
    nlohmann::json d;
    d["max_f"] = r.max_f;
    d["s_measure"] = r.s_measure;
    d["mae"] = r.mae;
    nlohmann::json pr = nlohmann::json::array();
    for (int k = 0; k < kThresholdCount; ++k) {
      pr.push_back({{"threshold", threshold_level(k)},
                    {"precision", r.precision[k]},
                    {"recall", r.recall[k]}});
    }
    d["pr_points"] = pr;
    nlohmann::json images = nlohmann::json::object();
    for (const auto& [stem, m] : r.per_image) {
      images[stem] = {{"mae", m.mae},
                      {"s_measure", m.s_measure},
                      {"max_f", m.max_f}};
    }
    d["images"] = images;
    datasets[r.dataset] = d;
  }
  j["datasets"] = datasets;
  return j;
}

void write_report_json(const fs::path& path, const nlohmann::json& report) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write report " + path.string());
  os << report.dump(2) << "\n";
}

void write_report_csv(const fs::path& path,
                      const std::vector<DatasetReport>& reports) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write csv " + path.string());
  os << "dataset,image,mae,s_measure,max_f\n";
  for (const auto& r : reports) {
    os << r.dataset << ",<mean>," << r.mae << "," << r.s_measure << ","
       << r.max_f << "\n";
    for (const auto& [stem, m] : r.per_image) {
      os << r.dataset << "," << stem << "," << m.mae << "," << m.s_measure
         << "," << m.max_f << "\n";
    }
  }
}

void write_pr_plot(const fs::path& path,
                   const std::vector<DatasetReport>& reports) {
  const int size = 640, margin = 60;
  cv::Mat canvas(size, size, CV_8UC3, cv::Scalar(255, 255, 255));
  const auto to_px = [&](double recall, double precision) {
    const int x = margin + static_cast<int>(recall * (size - 2 * margin));
    const int y = size - margin -
                  static_cast<int>(precision * (size - 2 * margin));
    return cv::Point(x, y);
  };
  // axes and grid
  for (int i = 0; i <= 10; ++i) {
    const double v = i / 10.0;
    cv::line(canvas, to_px(v, 0.0), to_px(v, 1.0), cv::Scalar(230, 230, 230));
    cv::line(canvas, to_px(0.0, v), to_px(1.0, v), cv::Scalar(230, 230, 230));
    char label[16];
    std::snprintf(label, sizeof(label), "%.1f", v);
    cv::putText(canvas, label, to_px(v, 0.0) + cv::Point(-10, 20),
                cv::FONT_HERSHEY_SIMPLEX, 0.35, cv::Scalar(80, 80, 80));
    cv::putText(canvas, label, to_px(0.0, v) + cv::Point(-35, 5),
                cv::FONT_HERSHEY_SIMPLEX, 0.35, cv::Scalar(80, 80, 80));
  }
  cv::line(canvas, to_px(0, 0), to_px(1, 0), cv::Scalar(0, 0, 0), 2);
  cv::line(canvas, to_px(0, 0), to_px(0, 1), cv::Scalar(0, 0, 0), 2);
  cv::putText(canvas, "recall", to_px(0.45, 0.0) + cv::Point(0, 42),
              cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(0, 0, 0));
  cv::putText(canvas, "precision", cv::Point(8, margin - 20),
              cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(0, 0, 0));

  const cv::Scalar palette[] = {
      {180, 60, 30}, {30, 120, 200}, {40, 160, 60}, {160, 40, 160},
      {30, 180, 200}};
  int color_idx = 0;
  for (const auto& r : reports) {
    const cv::Scalar color = palette[color_idx % 5];
    for (int k = 1; k < kThresholdCount; ++k) {
      cv::line(canvas, to_px(r.recall[k - 1], r.precision[k - 1]),
               to_px(r.recall[k], r.precision[k]), color, 2);
    }
    cv::putText(canvas, r.dataset,
                cv::Point(margin + 10, margin + 20 * (color_idx + 1)),
                cv::FONT_HERSHEY_SIMPLEX, 0.5, color);
    ++color_idx;
  }
  if (!cv::imwrite(path.string(), canvas)) {
    throw IoError("cannot write PR plot " + path.string());
  }
}

}  // namespace cdinet
