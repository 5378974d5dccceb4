#pragma once

#include "cdinet/rde.hpp"

namespace cdinet {

/// Semantic-enhancement block used at the high encoder stages. The guide
/// stream drives a spatial gate and the primary stream a channel gate
/// (attention level); the guide itself is run through cascaded channel +
/// spatial attention (feature level); the two are summed:
///   f_ps  = sigmoid(conv3(channel_max(guide))) * primary
///   d_att = sigmoid(FC(GAP(f_ps))) * f_ps
///   d_add = cascade(guide)
///   out   = d_att + d_add          (+ primary with alt_addition)
class DseBlock : public InteractionBlock {
 public:
  DseBlock(int channels, int reduction_ratio, Rng& rng,
           bool alt_addition = false);

  Var spatial_gate(const Var& primary, const Var& guide) const;  // f_ps
  Var attention_level_enhance(const Var& f_ps) const;            // d_att
  Var feature_level_enhance(const Var& guide) const;             // d_add
  Var forward(const Var& primary, const Var& guide) const override;

  /// Probe mode: every gate acts as 1, so forward degenerates to
  /// primary + guide (the direct-addition baseline).
  void set_bypass_gates(bool bypass) { bypass_gates_ = bypass; }

  int channels() const { return channels_; }

 private:
  int channels_;
  bool alt_addition_;
  bool bypass_gates_ = false;
  SpatialAttention spatial_;
  ChannelAttention channel_;
  CascadedAttention guide_enhance_;
};

}  // namespace cdinet
