#include "cdinet/backbone.hpp"

#include <string>

#include "cdinet/checkpoint.hpp"

namespace cdinet {

BackboneConfig BackboneConfig::full_scale() { return BackboneConfig{}; }

BackboneConfig BackboneConfig::toy(std::array<int, 5> channels) {
  BackboneConfig cfg;
  cfg.scale = Scale::toy;
  cfg.stage_channels = channels;
  return cfg;
}

void BackboneConfig::validate() const {
  if (scale == Scale::full) {
    const std::array<int, 5> vgg = {64, 128, 256, 512, 512};
    if (stage_channels != vgg) {
      throw ConfigError("full-scale backbone requires VGG16 stage channels "
                        "[64,128,256,512,512]");
    }
  }
  for (int c : stage_channels) {
    if (c <= 0) throw ConfigError("backbone stage channels must be positive");
  }
  if (scale == Scale::toy && pretrained_weights_path) {
    throw ConfigError("pretrained weights require full scale");
  }
}

VggStream::VggStream(const BackboneConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  for (int s = 0; s < 5; ++s) {
    std::vector<std::unique_ptr<ConvBlock>> convs;
    int in_c = (s == 0) ? 3 : config_.stage_channels[s - 1];
    for (int j = 0; j < kStageConvCount[s]; ++j) {
      ConvBlockSpec spec;
      spec.in_channels = in_c;
      spec.out_channels = config_.stage_channels[s];
      spec.kernel_size = 3;
      convs.push_back(std::make_unique<ConvBlock>(spec, rng));
      add_child("stage" + std::to_string(s + 1) + ".conv" + std::to_string(j + 1),
                convs.back().get());
      in_c = config_.stage_channels[s];
    }
    stages_.push_back(std::move(convs));
  }
}

int VggStream::stage_input_channels(int stage_index) const {
  if (stage_index < 1 || stage_index > 5) {
    throw ConfigError("stage index must be in 1..5, got " +
                      std::to_string(stage_index));
  }
  return stage_index == 1 ? 3 : config_.stage_channels[stage_index - 2];
}

Var VggStream::encode_stage(const Var& x, int stage_index) const {
  const int expected = stage_input_channels(stage_index);
  if (x->value.shape().c != expected) {
    throw ConfigError("stage " + std::to_string(stage_index) + " expects " +
                      std::to_string(expected) + " input channels, got " +
                      std::to_string(x->value.shape().c));
  }
  Var y = x;
  if (stage_index >= 2) {
    y = ops::max_pool2(y);
  }
  for (const auto& conv : stages_[stage_index - 1]) {
    y = conv->forward(y);
  }
  return y;
}

std::vector<Var> VggStream::encode(const Var& x) const {
  std::vector<Var> features;
  Var cur = x;
  for (int s = 1; s <= 5; ++s) {
    cur = encode_stage(cur, s);
    features.push_back(cur);
  }
  return features;
}

void load_pretrained(VggStream& stream, const BackboneConfig& config) {
  if (!config.pretrained_weights_path) {
    return;  // default initialization stands
  }
  if (config.scale != BackboneConfig::Scale::full) {
    throw ConfigError("pretrained weights require full scale");
  }
  const TensorArchive archive = TensorArchive::load(*config.pretrained_weights_path);
  for (auto& [name, param] : stream.named_parameters()) {
    const Tensor* src = archive.find(name);
    if (!src) {
      throw IoError("pretrained archive is missing key '" + name + "'");
    }
    if (src->shape() != param->value.shape()) {
      throw IoError("pretrained key '" + name + "' has shape " +
                    src->shape().str() + ", expected " +
                    param->value.shape().str());
    }
    param->value = *src;
  }
}

}  // namespace cdinet
