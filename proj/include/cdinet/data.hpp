#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cdinet/rng.hpp"
#include "cdinet/tensor.hpp"

namespace cdinet {

/// One aligned record: RGB in [0,1], per-image min-max-normalized depth
/// replicated to three identical channels, binary {0,1} ground truth.
struct RGBDSample {
  Tensor rgb;    // (1,3,S,S)
  Tensor depth;  // (1,3,S,S)
  Tensor gt;     // (1,1,S,S)
  std::string id;
};

struct ManifestEntry {
  std::string dataset;
  std::string stem;
  std::filesystem::path rgb_path;
  std::filesystem::path depth_path;
  std::filesystem::path gt_path;  // may be empty for inference-only entries

  std::string id() const { return dataset + "/" + stem; }
};

/// Files found under `<root>/<name>/{RGB,depth,GT}/<stem>.<ext>` plus the
/// optional declared train/test stem lists (`train.txt` / `test.txt`).
struct DatasetManifest {
  std::string name;
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
  std::vector<std::string> train_stems;
  std::optional<std::vector<std::string>> test_stems;
};

DatasetManifest discover_dataset(const std::filesystem::path& data_root,
                                 const std::string& name,
                                 bool require_gt = true);

std::vector<std::string> read_stem_list(const std::filesystem::path& file);

/// Loads, resizes (bilinear for rgb/depth, nearest for gt), binarizes the
/// mask at 0.5 and min-max-normalizes depth per image (constant maps become
/// zeros). A mask without foreground is allowed but logged as a warning.
RGBDSample load_sample(const ManifestEntry& entry, int target_size,
                       bool with_gt = true);

// Joint geometric augmentation: horizontal flip with p=0.5 and a uniformly
// chosen multiple of 90 degrees, identical across rgb/depth/gt.
RGBDSample augment(const RGBDSample& sample, Rng& rng);

Tensor flip_horizontal(const Tensor& t);
Tensor rotate90(const Tensor& t, int quarter_turns);

struct SplitResult {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> test;
};

/// Train = concatenated declared train lists; test = declared test lists
/// where present, otherwise the complement. Duplicate or cross-listed ids
/// are a hard error naming the offenders.
SplitResult make_split(const std::vector<DatasetManifest>& manifests);

}  // namespace cdinet
