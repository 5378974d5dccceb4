#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdinet/tensor.hpp"

namespace cdinet {

/// Binarization grid for the F-measure sweep: k/255 for k = 0..254.
inline constexpr int kThresholdCount = 255;
inline double threshold_level(int k) { return k / 255.0; }

/// Prediction/ground-truth pair, both (1,1,H,W); pred in [0,1], gt binary.
struct SaliencyPair {
  Tensor pred;
  Tensor gt;
};

/// Precision/recall at one threshold (prediction binarized as pred > t).
/// Conventions: precision = 1 when nothing is predicted positive,
/// recall = 1 when the ground truth has no foreground.
std::pair<double, double> precision_recall(const SaliencyPair& pair,
                                           double threshold);

/// (1+b2)*P*R / (b2*P + R); 0 when the denominator vanishes.
double f_measure(double precision, double recall, double beta2 = 0.3);

double max_f_measure(const SaliencyPair& pair);

double mae(const SaliencyPair& pair);

/// Structure measure: alpha * S_object + (1-alpha) * S_region, clamped to
/// [0,1]; degenerate ground truths use the mean-prediction rule.
double s_measure(const SaliencyPair& pair, double alpha = 0.5);

struct ImageMetrics {
  double mae = 0.0;
  double s_measure = 0.0;
  double max_f = 0.0;
  std::array<double, kThresholdCount> precision{};
  std::array<double, kThresholdCount> recall{};
};

ImageMetrics score_pair(const SaliencyPair& pair);

struct DatasetReport {
  std::string dataset;
  double max_f = 0.0;      // from the mean PR curve
  double s_measure = 0.0;  // mean over images
  double mae = 0.0;        // mean over images
  std::array<double, kThresholdCount> precision{};  // mean per threshold
  std::array<double, kThresholdCount> recall{};
  std::map<std::string, ImageMetrics> per_image;
};

/// Scores every stem present in both directories (predictions are resized
/// to the ground-truth resolution first). Unmatched stems are skipped with
/// a warning; an empty intersection is an error.
DatasetReport evaluate_dataset(const std::filesystem::path& pred_dir,
                               const std::filesystem::path& gt_dir,
                               const std::string& dataset_name = "dataset");

inline constexpr int kReportSchemaVersion = 1;

nlohmann::json report_to_json(
    const std::vector<DatasetReport>& reports,
    const nlohmann::json& identifiers = nlohmann::json::object());
void write_report_json(const std::filesystem::path& path,
                       const nlohmann::json& report);
void write_report_csv(const std::filesystem::path& path,
                      const std::vector<DatasetReport>& reports);
void write_pr_plot(const std::filesystem::path& path,
                   const std::vector<DatasetReport>& reports);

}  // namespace cdinet
