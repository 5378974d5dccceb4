#pragma once

// Synthetic RGB-D fixtures shared by the trainer tests, the acceptance
// suite and the CLI smoke test: bright axis-aligned squares on a dark
// background, with the object marked as near in the depth map.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cdinet/data.hpp"

namespace fixtures {

inline std::vector<cdinet::RGBDSample> synthetic_pairs(int size, int count,
                                                       cdinet::Rng& rng) {
  std::vector<cdinet::RGBDSample> out;
  for (int i = 0; i < count; ++i) {
    cdinet::RGBDSample s;
    s.rgb = cdinet::Tensor({1, 3, size, size});
    s.depth = cdinet::Tensor({1, 3, size, size});
    s.gt = cdinet::Tensor({1, 1, size, size});
    const int side = size / 2;
    const int y0 = size / 8 + (i % 2) * (size / 4);
    const int x0 = size / 8 + ((i / 2) % 2) * (size / 4);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const bool inside =
            y >= y0 && y < y0 + side && x >= x0 && x < x0 + side;
        const double noise = 0.05 * rng.uniform();
        for (int c = 0; c < 3; ++c) {
          s.rgb.at(0, c, y, x) =
              (inside ? 0.8 : 0.2) + noise * ((c + 1) % 2 ? 1 : -1);
        }
        const double d = inside ? 0.9 : 0.1;
        s.depth.at(0, 0, y, x) = d;
        s.depth.at(0, 1, y, x) = d;
        s.depth.at(0, 2, y, x) = d;
        s.gt.at(0, 0, y, x) = inside ? 1.0 : 0.0;
      }
    }
    s.id = "fixture/p" + std::to_string(i);
    out.push_back(std::move(s));
  }
  return out;
}

/// Writes `count` samples as PNG files in the on-disk dataset layout
/// (<root>/<name>/{RGB,depth,GT}) with the first `train_count` stems
/// listed in train.txt.
inline void write_fixture_dataset(const std::filesystem::path& root,
                                  const std::string& name, int size,
                                  int count, int train_count) {
  namespace fs = std::filesystem;
  const fs::path base = root / name;
  fs::create_directories(base / "RGB");
  fs::create_directories(base / "depth");
  fs::create_directories(base / "GT");
  cdinet::Rng rng(123);
  auto samples = synthetic_pairs(size, count, rng);
  std::ofstream train_list(base / "train.txt");
  for (int i = 0; i < count; ++i) {
    const std::string stem = "p" + std::to_string(i);
    const auto& s = samples[i];
    cv::Mat rgb(size, size, CV_8UC3);
    cv::Mat depth(size, size, CV_8UC1);
    cv::Mat gt(size, size, CV_8UC1);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        rgb.at<cv::Vec3b>(y, x) =
            cv::Vec3b(static_cast<uchar>(s.rgb.at(0, 2, y, x) * 255),
                      static_cast<uchar>(s.rgb.at(0, 1, y, x) * 255),
                      static_cast<uchar>(s.rgb.at(0, 0, y, x) * 255));
        depth.at<uchar>(y, x) =
            static_cast<uchar>(s.depth.at(0, 0, y, x) * 255);
        gt.at<uchar>(y, x) = s.gt.at(0, 0, y, x) > 0.5 ? 255 : 0;
      }
    }
    cv::imwrite((base / "RGB" / (stem + ".png")).string(), rgb);
    cv::imwrite((base / "depth" / (stem + ".png")).string(), depth);
    cv::imwrite((base / "GT" / (stem + ".png")).string(), gt);
    if (i < train_count) train_list << stem << "\n";
  }
}

}  // namespace fixtures
