#pragma once

#include <memory>
#include <vector>

#include "cdinet/module.hpp"
#include "cdinet/ops.hpp"

namespace cdinet {

/// Same-padding convolution unit: conv (+ optional instance norm, ReLU).
struct ConvBlockSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_size = 3;
  bool use_activation = true;
  bool use_normalization = false;

  int padding() const { return (kernel_size - 1) / 2; }
  void validate() const;
};

class ConvBlock : public Module {
 public:
  ConvBlock(const ConvBlockSpec& spec, Rng& rng);

  Var forward(const Var& x) const;
  const ConvBlockSpec& spec() const { return spec_; }

 private:
  ConvBlockSpec spec_;
  Var weight_;
  Var bias_;
  Var gamma_;  // only with use_normalization
  Var beta_;
};

/// sigmoid(conv stack(channel-wise max)) -> (N,1,H,W) mask.
/// The conv stack runs on the 1-channel pooled map; ReLU between convs is
/// the default and can be switched off.
class SpatialAttention : public Module {
 public:
  SpatialAttention(const std::vector<int>& kernel_sizes, Rng& rng,
                   bool relu_between = true);

  Var forward(const Var& f) const;

 private:
  std::vector<std::unique_ptr<ConvBlock>> convs_;
};

/// sigmoid(FC(ReLU(FC(GAP(f))))) -> (N,C,1,1) weights, squeeze-excitation
/// style. The ratio is clamped to C when C < ratio.
class ChannelAttention : public Module {
 public:
  ChannelAttention(int channels, int reduction_ratio, Rng& rng);

  Var forward(const Var& f) const;
  int effective_ratio() const { return ratio_; }

 private:
  int channels_;
  int ratio_;
  Var fc1_weight_, fc1_bias_;
  Var fc2_weight_, fc2_bias_;
};

/// Channel attention gate followed by a spatial attention gate, each
/// multiplied into the feature map.
class CascadedAttention : public Module {
 public:
  CascadedAttention(int channels, int reduction_ratio,
                    const std::vector<int>& spatial_kernels, Rng& rng);

  Var forward(const Var& f) const;

 private:
  ChannelAttention channel_;
  SpatialAttention spatial_;
};

}  // namespace cdinet
