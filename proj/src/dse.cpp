#include "cdinet/dse.hpp"

namespace cdinet {

DseBlock::DseBlock(int channels, int reduction_ratio, Rng& rng,
                   bool alt_addition)
    : channels_(channels),
      alt_addition_(alt_addition),
      spatial_({3}, rng),
      channel_(channels, reduction_ratio, rng),
      guide_enhance_(channels, reduction_ratio, {7}, rng) {
  add_child("spatial", &spatial_);
  add_child("channel", &channel_);
  add_child("guide_enhance", &guide_enhance_);
}

Var DseBlock::spatial_gate(const Var& primary, const Var& guide) const {
  if (primary->value.shape() != guide->value.shape()) {
    throw ShapeError("DSE streams must match, got " +
                     primary->value.shape().str() + " vs " +
                     guide->value.shape().str());
  }
  if (bypass_gates_) return primary;
  return ops::mul(primary, spatial_.forward(guide));
}

Var DseBlock::attention_level_enhance(const Var& f_ps) const {
  if (bypass_gates_) return f_ps;
  return ops::mul(f_ps, channel_.forward(f_ps));
}

Var DseBlock::feature_level_enhance(const Var& guide) const {
  if (bypass_gates_) return guide;
  return guide_enhance_.forward(guide);
}

Var DseBlock::forward(const Var& primary, const Var& guide) const {
  Var d_att = attention_level_enhance(spatial_gate(primary, guide));
  Var d_add = feature_level_enhance(guide);
  Var out = ops::add(d_att, d_add);
  if (alt_addition_) {
    out = ops::add(out, primary);
  }
  return out;
}

}  // namespace cdinet
