#pragma once

#include <array>
#include <memory>
#include <vector>

#include "cdinet/core_blocks.hpp"

namespace cdinet {

/// Dense decoding reconstruction. Every level i in 1..4 builds a semantic
/// block from the bilinearly upsampled higher-level skips,
///   b_i = conv3(conv1(concat(up(skip_{i+1}), ..., up(skip_5)))),
/// gates its own skip residually (b*skip + skip), and the decoder walks
/// top-down combining the running features with the refined skip through
/// two 3x3 convs and a 2x upsample. Level 5 keeps its skip unchanged (the
/// dense concat is empty there). `use_semantic_blocks=false` is the plain
/// corresponding-layer skip decoder.
class DdrDecoder : public Module {
 public:
  DdrDecoder(const std::array<int, 5>& stage_channels, Rng& rng,
             bool use_semantic_blocks = true);

  /// Semantic block for `level` in 1..4; level 5 is a precondition error.
  Var semantic_block(const std::vector<Var>& skips, int level) const;

  /// b * skip + skip (elementwise, identical shapes).
  static Var refine_skip(const Var& b, const Var& skip);

  /// Five skips (level 1..5) -> 1-channel logits at level-1 resolution.
  Var decode(const std::vector<Var>& skips) const;

  /// Elementwise sigmoid over 1-channel logits.
  static Var predict(const Var& logits);

  bool uses_semantic_blocks() const { return use_semantic_blocks_; }

 private:
  void check_skips(const std::vector<Var>& skips) const;

  std::array<int, 5> channels_;
  bool use_semantic_blocks_;
  std::vector<std::unique_ptr<ConvBlock>> block_reduce_;   // conv1, levels 1..4
  std::vector<std::unique_ptr<ConvBlock>> block_fuse_;     // conv3, levels 1..4
  std::vector<std::unique_ptr<ConvBlock>> decode_a_;       // levels 1..5
  std::vector<std::unique_ptr<ConvBlock>> decode_b_;       // levels 1..5
  std::unique_ptr<ConvBlock> head_;
};

}  // namespace cdinet
