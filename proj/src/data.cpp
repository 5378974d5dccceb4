#include "cdinet/data.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace cdinet {

namespace fs = std::filesystem;

namespace {

const char* kExtensions[] = {".png", ".jpg", ".jpeg", ".PNG", ".JPG", ".JPEG"};

std::optional<fs::path> find_by_stem(const fs::path& dir,
                                     const std::string& stem) {
  for (const char* ext : kExtensions) {
    fs::path candidate = dir / (stem + ext);
    if (fs::exists(candidate)) return candidate;
  }
  return std::nullopt;
}

cv::Mat read_single_channel(const fs::path& path, const char* role) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (img.empty()) {
    throw IoError(std::string("unreadable ") + role + " image: " + path.string());
  }
  if (img.channels() != 1) {
    throw IoError(std::string(role) + " image must be single-channel, got " +
                  std::to_string(img.channels()) + " channels: " + path.string());
  }
  cv::Mat out;
  const double scale = img.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
  img.convertTo(out, CV_64F, scale);
  return out;
}

}  // namespace

std::vector<std::string> read_stem_list(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw IoError("cannot open list file " + file.string());
  std::vector<std::string> stems;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.pop_back();
    }
    std::size_t start = line.find_first_not_of(' ');
    if (start == std::string::npos) continue;
    line = line.substr(start);
    if (line.empty() || line[0] == '#') continue;
    stems.push_back(line);
  }
  return stems;
}

DatasetManifest discover_dataset(const fs::path& data_root,
                                 const std::string& name, bool require_gt) {
  DatasetManifest manifest;
  manifest.name = name;
  manifest.root = data_root / name;
  const fs::path rgb_dir = manifest.root / "RGB";
  const fs::path depth_dir = manifest.root / "depth";
  const fs::path gt_dir = manifest.root / "GT";
  if (!fs::is_directory(rgb_dir)) {
    throw IoError("dataset '" + name + "' has no RGB directory at " +
                  rgb_dir.string());
  }

  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(rgb_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (std::none_of(std::begin(kExtensions), std::end(kExtensions),
                     [&](const char* e) { return ext == e; })) {
      continue;
    }
    stems.push_back(entry.path().stem().string());
  }
  std::sort(stems.begin(), stems.end());

  for (const std::string& stem : stems) {
    ManifestEntry e;
    e.dataset = name;
    e.stem = stem;
    e.rgb_path = *find_by_stem(rgb_dir, stem);
    auto depth = find_by_stem(depth_dir, stem);
    if (!depth) {
      throw IoError("dataset '" + name + "': no depth file for stem '" + stem + "'");
    }
    e.depth_path = *depth;
    auto gt = find_by_stem(gt_dir, stem);
    if (gt) {
      e.gt_path = *gt;
    } else if (require_gt) {
      throw IoError("dataset '" + name + "': no GT file for stem '" + stem + "'");
    }
    manifest.entries.push_back(std::move(e));
  }

  const fs::path train_list = manifest.root / "train.txt";
  if (fs::exists(train_list)) {
    manifest.train_stems = read_stem_list(train_list);
  }
  const fs::path test_list = manifest.root / "test.txt";
  if (fs::exists(test_list)) {
    manifest.test_stems = read_stem_list(test_list);
  }
  return manifest;
}

RGBDSample load_sample(const ManifestEntry& entry, int target_size,
                       bool with_gt) {
  if (target_size <= 0) throw ConfigError("target_size must be positive");
  const int s = target_size;
  RGBDSample sample;
  sample.id = entry.id();

  cv::Mat rgb = cv::imread(entry.rgb_path.string(), cv::IMREAD_COLOR);
  if (rgb.empty()) {
    throw IoError("unreadable rgb image: " + entry.rgb_path.string());
  }
  cv::resize(rgb, rgb, cv::Size(s, s), 0, 0, cv::INTER_LINEAR);
  sample.rgb = Tensor({1, 3, s, s});
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const cv::Vec3b bgr = rgb.at<cv::Vec3b>(y, x);
      sample.rgb.at(0, 0, y, x) = bgr[2] / 255.0;
      sample.rgb.at(0, 1, y, x) = bgr[1] / 255.0;
      sample.rgb.at(0, 2, y, x) = bgr[0] / 255.0;
    }
  }

  cv::Mat depth = read_single_channel(entry.depth_path, "depth");
  cv::resize(depth, depth, cv::Size(s, s), 0, 0, cv::INTER_LINEAR);
  double lo, hi;
  cv::minMaxLoc(depth, &lo, &hi);
  const double range = hi - lo;
  sample.depth = Tensor({1, 3, s, s});
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const double raw = depth.at<double>(y, x);
      const double v = range > 0.0 ? (raw - lo) / range : 0.0;
      sample.depth.at(0, 0, y, x) = v;
      sample.depth.at(0, 1, y, x) = v;
      sample.depth.at(0, 2, y, x) = v;
    }
  }

  sample.gt = Tensor({1, 1, s, s});
  if (with_gt) {
    if (entry.gt_path.empty()) {
      throw IoError("sample " + sample.id + " has no GT file");
    }
    cv::Mat gt = read_single_channel(entry.gt_path, "GT");
    cv::resize(gt, gt, cv::Size(s, s), 0, 0, cv::INTER_NEAREST);
    std::size_t foreground = 0;
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        const double v = gt.at<double>(y, x) >= 0.5 ? 1.0 : 0.0;
        sample.gt.at(0, 0, y, x) = v;
        if (v > 0.0) ++foreground;
      }
    }
    if (foreground == 0) {
      std::cerr << "[warn] ground truth has no foreground: " << sample.id
                << "\n";
    }
  }
  return sample;
}

Tensor flip_horizontal(const Tensor& t) {
  const Shape s = t.shape();
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          out.at(n, c, y, x) = t.at(n, c, y, s.w - 1 - x);
        }
      }
    }
  }
  return out;
}

Tensor rotate90(const Tensor& t, int quarter_turns) {
  int k = ((quarter_turns % 4) + 4) % 4;
  Tensor out = t;
  // one counterclockwise quarter turn per iteration
  for (int step = 0; step < k; ++step) {
    const Shape s = out.shape();
    Tensor next({s.n, s.c, s.w, s.h});
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < s.w; ++y) {
          for (int x = 0; x < s.h; ++x) {
            next.at(n, c, y, x) = out.at(n, c, x, s.w - 1 - y);
          }
        }
      }
    }
    out = std::move(next);
  }
  return out;
}

RGBDSample augment(const RGBDSample& sample, Rng& rng) {
  RGBDSample out = sample;
  if (rng.bernoulli(0.5)) {
    out.rgb = flip_horizontal(out.rgb);
    out.depth = flip_horizontal(out.depth);
    out.gt = flip_horizontal(out.gt);
  }
  const int k = rng.uniform_int(4);
  if (k != 0) {
    out.rgb = rotate90(out.rgb, k);
    out.depth = rotate90(out.depth, k);
    out.gt = rotate90(out.gt, k);
  }
  return out;
}

SplitResult make_split(const std::vector<DatasetManifest>& manifests) {
  SplitResult split;
  std::vector<std::string> duplicates;
  for (const auto& manifest : manifests) {
    std::map<std::string, const ManifestEntry*> by_stem;
    for (const auto& entry : manifest.entries) {
      by_stem[entry.stem] = &entry;
    }
    std::set<std::string> train_set;
    for (const std::string& stem : manifest.train_stems) {
      if (!train_set.insert(stem).second) {
        duplicates.push_back(manifest.name + "/" + stem);
        continue;
      }
      auto it = by_stem.find(stem);
      if (it == by_stem.end()) {
        throw IoError("dataset '" + manifest.name + "': train list names '" +
                      stem + "' but no such files were found");
      }
      split.train.push_back(*it->second);
    }
    if (manifest.test_stems) {
      for (const std::string& stem : *manifest.test_stems) {
        if (train_set.count(stem)) {
          duplicates.push_back(manifest.name + "/" + stem);
          continue;
        }
        auto it = by_stem.find(stem);
        if (it == by_stem.end()) {
          throw IoError("dataset '" + manifest.name + "': test list names '" +
                        stem + "' but no such files were found");
        }
        split.test.push_back(*it->second);
      }
    } else {
      for (const auto& entry : manifest.entries) {
        if (!train_set.count(entry.stem)) {
          split.test.push_back(entry);
        }
      }
    }
  }
  if (!duplicates.empty()) {
    std::string msg = "ids appear in both splits:";
    for (const auto& id : duplicates) msg += " " + id;
    throw IoError(msg);
  }
  return split;
}

}  // namespace cdinet
