#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "cdinet/core_blocks.hpp"

namespace cdinet {

/// Five-stage VGG16-style feature extractor; the trailing pool and the
/// classifier head are dropped. `toy` keeps the topology but narrows the
/// channel plan so the whole network runs in CPU tests.
struct BackboneConfig {
  enum class Scale { full, toy };

  Scale scale = Scale::full;
  std::array<int, 5> stage_channels = {64, 128, 256, 512, 512};
  std::optional<std::filesystem::path> pretrained_weights_path;

  static BackboneConfig full_scale();
  static BackboneConfig toy(std::array<int, 5> channels = {8, 16, 32, 64, 64});

  void validate() const;
};

// conv layers per stage, VGG16
inline constexpr std::array<int, 5> kStageConvCount = {2, 2, 3, 3, 3};

class VggStream : public Module {
 public:
  VggStream(const BackboneConfig& config, Rng& rng);

  /// Runs one stage (1-based). Stages 2..5 start with a 2x max-pool of
  /// their input; stage 5 has no trailing pool.
  Var encode_stage(const Var& x, int stage_index) const;

  /// All five stage outputs for a (N,3,H,W) input.
  std::vector<Var> encode(const Var& x) const;

  const BackboneConfig& config() const { return config_; }

  /// Expected input channels of a stage (3 for stage 1).
  int stage_input_channels(int stage_index) const;

 private:
  BackboneConfig config_;
  std::vector<std::vector<std::unique_ptr<ConvBlock>>> stages_;
};

/// Fills a full-scale stream from a weight archive keyed
/// `stage<i>.conv<j>.{weight,bias}` (schema in the README). Giving a toy
/// stream a weights path is an error; so is a missing or corrupt file or a
/// missing/mis-shaped key.
void load_pretrained(VggStream& stream, const BackboneConfig& config);

}  // namespace cdinet
