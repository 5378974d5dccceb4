#include "cdinet/decoder.hpp"

#include <numeric>
#include <string>

namespace cdinet {

namespace {

ConvBlockSpec conv_spec(int in_c, int out_c, int k, bool activation = true) {
  ConvBlockSpec spec;
  spec.in_channels = in_c;
  spec.out_channels = out_c;
  spec.kernel_size = k;
  spec.use_activation = activation;
  return spec;
}

}  // namespace

DdrDecoder::DdrDecoder(const std::array<int, 5>& stage_channels, Rng& rng,
                       bool use_semantic_blocks)
    : channels_(stage_channels), use_semantic_blocks_(use_semantic_blocks) {
  if (use_semantic_blocks_) {
    for (int level = 1; level <= 4; ++level) {
      int concat_c = 0;
      for (int j = level + 1; j <= 5; ++j) concat_c += channels_[j - 1];
      const int c = channels_[level - 1];
      block_reduce_.push_back(
          std::make_unique<ConvBlock>(conv_spec(concat_c, c, 1), rng));
      block_fuse_.push_back(
          std::make_unique<ConvBlock>(conv_spec(c, c, 3), rng));
      add_child("block" + std::to_string(level) + ".reduce",
                block_reduce_.back().get());
      add_child("block" + std::to_string(level) + ".fuse",
                block_fuse_.back().get());
    }
  }
  for (int level = 1; level <= 5; ++level) {
    const int c = channels_[level - 1];
    const int in_c = (level == 5) ? c : c + channels_[level];
    decode_a_.push_back(std::make_unique<ConvBlock>(conv_spec(in_c, c, 3), rng));
    decode_b_.push_back(std::make_unique<ConvBlock>(conv_spec(c, c, 3), rng));
    add_child("decode" + std::to_string(level) + ".a", decode_a_.back().get());
    add_child("decode" + std::to_string(level) + ".b", decode_b_.back().get());
  }
  head_ = std::make_unique<ConvBlock>(
      conv_spec(channels_[0], 1, 3, /*activation=*/false), rng);
  add_child("head", head_.get());
}

void DdrDecoder::check_skips(const std::vector<Var>& skips) const {
  if (skips.size() != 5) {
    throw ConfigError("decoder needs a complete 5-level skip set, got " +
                      std::to_string(skips.size()));
  }
  for (int i = 0; i < 5; ++i) {
    if (!skips[i]) {
      throw ConfigError("skip level " + std::to_string(i + 1) + " is missing");
    }
    if (skips[i]->value.shape().c != channels_[i]) {
      throw ConfigError("skip level " + std::to_string(i + 1) + " has " +
                        std::to_string(skips[i]->value.shape().c) +
                        " channels, decoder expects " +
                        std::to_string(channels_[i]));
    }
  }
}

Var DdrDecoder::semantic_block(const std::vector<Var>& skips, int level) const {
  if (level < 1 || level > 4) {
    throw ConfigError("semantic_block level must be in 1..4, got " +
                      std::to_string(level) + " (level 5 keeps its skip)");
  }
  if (!use_semantic_blocks_) {
    throw ConfigError("decoder was built without semantic blocks");
  }
  check_skips(skips);
  const Shape target = skips[level - 1]->value.shape();
  std::vector<Var> upsampled;
  for (int j = level + 1; j <= 5; ++j) {
    upsampled.push_back(
        ops::upsample_bilinear(skips[j - 1], target.h, target.w));
  }
  Var fused = ops::concat_channels(upsampled);
  return block_fuse_[level - 1]->forward(
      block_reduce_[level - 1]->forward(fused));
}

Var DdrDecoder::refine_skip(const Var& b, const Var& skip) {
  if (b->value.shape() != skip->value.shape()) {
    throw ShapeError("refine_skip shape mismatch: " + b->value.shape().str() +
                     " vs " + skip->value.shape().str());
  }
  return ops::add(ops::mul(b, skip), skip);
}

Var DdrDecoder::decode(const std::vector<Var>& skips) const {
  check_skips(skips);
  std::vector<Var> refined(5);
  refined[4] = skips[4];  // level 5: no higher levels to concatenate
  for (int level = 1; level <= 4; ++level) {
    if (use_semantic_blocks_) {
      refined[level - 1] = refine_skip(semantic_block(skips, level),
                                       skips[level - 1]);
    } else {
      refined[level - 1] = skips[level - 1];
    }
  }

  Var current;
  for (int level = 5; level >= 1; --level) {
    Var x = (level == 5)
                ? refined[4]
                : ops::concat_channels({current, refined[level - 1]});
    x = decode_b_[level - 1]->forward(decode_a_[level - 1]->forward(x));
    if (level > 1) {
      const Shape s = x->value.shape();
      current = ops::upsample_bilinear(x, s.h * 2, s.w * 2);
    } else {
      current = x;
    }
  }
  return head_->forward(current);
}

Var DdrDecoder::predict(const Var& logits) {
  if (logits->value.shape().c != 1) {
    throw ShapeError("predict expects 1-channel logits, got " +
                     logits->value.shape().str());
  }
  return ops::sigmoid(logits);
}

}  // namespace cdinet
