#pragma once

#include "cdinet/core_blocks.hpp"

namespace cdinet {

/// Common shape of the two cross-modality blocks: `primary` is the stream
/// being enhanced (it carries the residual and feeds the next stage),
/// `guide` is the other modality.
class InteractionBlock : public Module {
 public:
  virtual Var forward(const Var& primary, const Var& guide) const = 0;
};

/// Detail-enhancement block used at the low encoder stages. Fuses both
/// streams into a feature pool (1x1 then 3x3 conv), gates it with a
/// two-layer 7x7 spatial mask derived from the primary stream, and adds
/// the primary stream back:
///   out = mask(primary) * pool(guide, primary) + primary.
class RdeBlock : public InteractionBlock {
 public:
  RdeBlock(int channels, Rng& rng, bool mask_relu_between = true);

  Var fuse_pool(const Var& primary, const Var& guide) const;
  Var gate_mask(const Var& primary) const;
  Var forward(const Var& primary, const Var& guide) const override;

  int channels() const { return channels_; }

 private:
  void check_pair(const Var& primary, const Var& guide) const;

  int channels_;
  ConvBlock fuse_conv1_;
  ConvBlock fuse_conv3_;
  SpatialAttention mask_;
};

}  // namespace cdinet
