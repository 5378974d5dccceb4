#include "cdinet/core_blocks.hpp"

#include <string>

namespace cdinet {

void ConvBlockSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0) {
    throw ConfigError("ConvBlockSpec channels must be positive, got " +
                      std::to_string(in_channels) + "->" +
                      std::to_string(out_channels));
  }
  if (kernel_size != 1 && kernel_size != 3 && kernel_size != 7) {
    throw ConfigError("ConvBlockSpec kernel_size must be 1, 3 or 7, got " +
                      std::to_string(kernel_size));
  }
}

ConvBlock::ConvBlock(const ConvBlockSpec& spec, Rng& rng) : spec_(spec) {
  spec_.validate();
  const int fan_in = spec_.in_channels * spec_.kernel_size * spec_.kernel_size;
  weight_ = add_parameter(
      "weight", fan_in_uniform({spec_.out_channels, spec_.in_channels,
                                spec_.kernel_size, spec_.kernel_size},
                               fan_in, rng));
  bias_ = add_parameter("bias",
                        fan_in_uniform({1, spec_.out_channels, 1, 1}, fan_in, rng));
  if (spec_.use_normalization) {
    gamma_ = add_parameter("gamma", Tensor::ones({1, spec_.out_channels, 1, 1}));
    beta_ = add_parameter("beta", Tensor::zeros({1, spec_.out_channels, 1, 1}));
  }
}

Var ConvBlock::forward(const Var& x) const {
  const int c = x->value.shape().c;
  if (c != spec_.in_channels) {
    throw ConfigError("ConvBlock expected " + std::to_string(spec_.in_channels) +
                      " input channels, got " + std::to_string(c));
  }
  Var y = ops::conv2d(x, weight_, bias_, spec_.padding());
  if (spec_.use_normalization) {
    y = ops::instance_norm(y, gamma_, beta_);
  }
  if (spec_.use_activation) {
    y = ops::relu(y);
  }
  return y;
}

SpatialAttention::SpatialAttention(const std::vector<int>& kernel_sizes,
                                   Rng& rng, bool relu_between) {
  if (kernel_sizes.empty()) {
    throw ConfigError("SpatialAttention needs at least one kernel size");
  }
  for (std::size_t i = 0; i < kernel_sizes.size(); ++i) {
    ConvBlockSpec spec;
    spec.in_channels = 1;
    spec.out_channels = 1;
    spec.kernel_size = kernel_sizes[i];
    // ReLU only between convs; the stack ends in the sigmoid.
    spec.use_activation = relu_between && (i + 1 < kernel_sizes.size());
    convs_.push_back(std::make_unique<ConvBlock>(spec, rng));
    add_child("conv" + std::to_string(i + 1), convs_.back().get());
  }
}

Var SpatialAttention::forward(const Var& f) const {
  Var m = ops::channel_max(f);
  for (const auto& conv : convs_) {
    m = conv->forward(m);
  }
  return ops::sigmoid(m);
}

ChannelAttention::ChannelAttention(int channels, int reduction_ratio, Rng& rng)
    : channels_(channels) {
  if (channels <= 0 || reduction_ratio <= 0) {
    throw ConfigError("ChannelAttention requires positive channels and ratio");
  }
  ratio_ = reduction_ratio > channels ? channels : reduction_ratio;
  if (channels % ratio_ != 0) {
    throw ConfigError("ChannelAttention: " + std::to_string(channels) +
                      " channels not divisible by reduction ratio " +
                      std::to_string(ratio_));
  }
  const int hidden = channels / ratio_;
  fc1_weight_ = add_parameter("fc1.weight",
                              fan_in_uniform({hidden, channels, 1, 1}, channels, rng));
  fc1_bias_ = add_parameter("fc1.bias",
                            fan_in_uniform({1, hidden, 1, 1}, channels, rng));
  fc2_weight_ = add_parameter("fc2.weight",
                              fan_in_uniform({channels, hidden, 1, 1}, hidden, rng));
  fc2_bias_ = add_parameter("fc2.bias",
                            fan_in_uniform({1, channels, 1, 1}, hidden, rng));
}

Var ChannelAttention::forward(const Var& f) const {
  if (f->value.shape().c != channels_) {
    throw ConfigError("ChannelAttention expected " + std::to_string(channels_) +
                      " channels, got " + std::to_string(f->value.shape().c));
  }
  Var v = ops::global_avg_pool(f);
  v = ops::relu(ops::fully_connected(v, fc1_weight_, fc1_bias_));
  v = ops::fully_connected(v, fc2_weight_, fc2_bias_);
  return ops::sigmoid(v);
}

CascadedAttention::CascadedAttention(int channels, int reduction_ratio,
                                     const std::vector<int>& spatial_kernels,
                                     Rng& rng)
    : channel_(channels, reduction_ratio, rng), spatial_(spatial_kernels, rng) {
  add_child("channel", &channel_);
  add_child("spatial", &spatial_);
}

Var CascadedAttention::forward(const Var& f) const {
  Var x = ops::mul(f, channel_.forward(f));
  return ops::mul(x, spatial_.forward(x));
}

}  // namespace cdinet
