#include "cdinet/rde.hpp"

namespace cdinet {

namespace {

ConvBlockSpec fuse1_spec(int channels) {
  ConvBlockSpec spec;
  spec.in_channels = 2 * channels;
  spec.out_channels = channels;
  spec.kernel_size = 1;
  return spec;
}

ConvBlockSpec fuse3_spec(int channels) {
  ConvBlockSpec spec;
  spec.in_channels = channels;
  spec.out_channels = channels;
  spec.kernel_size = 3;
  return spec;
}

}  // namespace

RdeBlock::RdeBlock(int channels, Rng& rng, bool mask_relu_between)
    : channels_(channels),
      fuse_conv1_(fuse1_spec(channels), rng),
      fuse_conv3_(fuse3_spec(channels), rng),
      mask_({7, 7}, rng, mask_relu_between) {
  add_child("fuse_conv1", &fuse_conv1_);
  add_child("fuse_conv3", &fuse_conv3_);
  add_child("mask", &mask_);
}

void RdeBlock::check_pair(const Var& primary, const Var& guide) const {
  const Shape p = primary->value.shape();
  const Shape g = guide->value.shape();
  if (p != g) {
    throw ShapeError("RDE streams must match, got " + p.str() + " vs " + g.str());
  }
  if (p.c != channels_) {
    throw ConfigError("RDE built for " + std::to_string(channels_) +
                      " channels, got " + std::to_string(p.c));
  }
}

Var RdeBlock::fuse_pool(const Var& primary, const Var& guide) const {
  check_pair(primary, guide);
  Var fused = ops::concat_channels({guide, primary});
  return fuse_conv3_.forward(fuse_conv1_.forward(fused));
}

Var RdeBlock::gate_mask(const Var& primary) const {
  return mask_.forward(primary);
}

Var RdeBlock::forward(const Var& primary, const Var& guide) const {
  Var pool = fuse_pool(primary, guide);
  Var gated = ops::mul(pool, gate_mask(primary));
  return ops::add(gated, primary);
}

}  // namespace cdinet
