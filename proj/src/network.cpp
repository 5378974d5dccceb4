#include "cdinet/network.hpp"

#include <algorithm>
#include <set>

namespace cdinet {

namespace {

std::string mode_name(InteractionMode m) {
  switch (m) {
    case InteractionMode::discrepant: return "discrepant";
    case InteractionMode::unidirectional_depth_to_rgb: return "unidirectional";
    case InteractionMode::bidirectional: return "bidirectional";
  }
  return "?";
}

InteractionMode mode_from_name(const std::string& s) {
  if (s == "discrepant" || s == "no1") return InteractionMode::discrepant;
  if (s == "unidirectional" || s == "no2") {
    return InteractionMode::unidirectional_depth_to_rgb;
  }
  if (s == "bidirectional" || s == "no3") return InteractionMode::bidirectional;
  throw ConfigError("unknown interaction mode '" + s + "'");
}

std::string kind_name(BlockKind k) {
  return k == BlockKind::rde ? "rde" : "dse";
}

BlockKind kind_from_name(const std::string& s) {
  if (s == "rde") return BlockKind::rde;
  if (s == "dse") return BlockKind::dse;
  throw ConfigError("unknown block kind '" + s + "'");
}

}  // namespace

void NetworkConfig::validate() const {
  backbone.validate();
  std::set<int> low(low_stages.begin(), low_stages.end());
  std::set<int> high(high_stages.begin(), high_stages.end());
  if (low.size() != low_stages.size() || high.size() != high_stages.size()) {
    throw ConfigError("stage split contains duplicates");
  }
  if (low.empty() || high.empty()) {
    throw ConfigError("stage split: both parts must be nonempty");
  }
  std::set<int> all = low;
  for (int s : high) {
    if (!all.insert(s).second) {
      throw ConfigError("stage " + std::to_string(s) +
                        " appears in both low and high sets");
    }
  }
  if (all != std::set<int>{1, 2, 3, 4, 5}) {
    throw ConfigError("low/high stages must partition {1..5}");
  }
  if (reduction_ratio < 1) {
    throw ConfigError("reduction_ratio must be >= 1");
  }
  if (interaction_mode != InteractionMode::discrepant &&
      (without_rde || without_dse)) {
    throw ConfigError("without_rde/without_dse only combine with the "
                      "discrepant interaction mode");
  }
  if (disable_top_addition_probe && !without_dse) {
    throw ConfigError("disable_top_addition_probe requires without_dse");
  }
}

nlohmann::json NetworkConfig::to_json() const {
  nlohmann::json j;
  j["backbone"]["scale"] =
      backbone.scale == BackboneConfig::Scale::full ? "full" : "toy";
  j["backbone"]["stage_channels"] = backbone.stage_channels;
  if (backbone.pretrained_weights_path) {
    j["backbone"]["pretrained"] = backbone.pretrained_weights_path->string();
  }
  j["interaction_mode"] = mode_name(interaction_mode);
  j["without_rde"] = without_rde;
  j["without_dse"] = without_dse;
  j["without_ddr"] = without_ddr;
  j["low_stages"] = low_stages;
  j["high_stages"] = high_stages;
  j["low_block"] = kind_name(low_block);
  j["high_block"] = kind_name(high_block);
  j["dse_alt_addition"] = dse_alt_addition;
  j["reduction_ratio"] = reduction_ratio;
  j["disable_top_addition_probe"] = disable_top_addition_probe;
  return j;
}

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j) {
  NetworkConfig cfg;
  const auto& b = j.at("backbone");
  cfg.backbone.scale = b.at("scale").get<std::string>() == "full"
                           ? BackboneConfig::Scale::full
                           : BackboneConfig::Scale::toy;
  const auto chans = b.at("stage_channels").get<std::vector<int>>();
  if (chans.size() != 5) throw ConfigError("stage_channels must list 5 values");
  std::copy(chans.begin(), chans.end(), cfg.backbone.stage_channels.begin());
  if (b.contains("pretrained")) {
    cfg.backbone.pretrained_weights_path = b.at("pretrained").get<std::string>();
  }
  cfg.interaction_mode = mode_from_name(j.at("interaction_mode").get<std::string>());
  cfg.without_rde = j.value("without_rde", false);
  cfg.without_dse = j.value("without_dse", false);
  cfg.without_ddr = j.value("without_ddr", false);
  cfg.low_stages = j.value("low_stages", std::vector<int>{1, 2});
  cfg.high_stages = j.value("high_stages", std::vector<int>{3, 4, 5});
  cfg.low_block = kind_from_name(j.value("low_block", std::string("rde")));
  cfg.high_block = kind_from_name(j.value("high_block", std::string("dse")));
  cfg.dse_alt_addition = j.value("dse_alt_addition", false);
  cfg.reduction_ratio = j.value("reduction_ratio", 16);
  cfg.disable_top_addition_probe = j.value("disable_top_addition_probe", false);
  cfg.validate();
  return cfg;
}

std::unique_ptr<InteractionBlock> CdiNet::make_block(BlockKind kind,
                                                     int channels,
                                                     Rng& rng) const {
  if (kind == BlockKind::rde) {
    return std::make_unique<RdeBlock>(channels, rng);
  }
  return std::make_unique<DseBlock>(channels, config_.reduction_ratio, rng,
                                    config_.dse_alt_addition);
}

CdiNet::CdiNet(const NetworkConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  Rng rng(seed);
  rgb_encoder_ = std::make_unique<VggStream>(config_.backbone, rng);
  depth_encoder_ = std::make_unique<VggStream>(config_.backbone, rng);
  add_child("rgb_encoder", rgb_encoder_.get());
  add_child("depth_encoder", depth_encoder_.get());
  if (config_.backbone.pretrained_weights_path) {
    load_pretrained(*rgb_encoder_, config_.backbone);
    load_pretrained(*depth_encoder_, config_.backbone);
  }

  const auto in_set = [](const std::vector<int>& v, int s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  };
  const int top_stage = 5;

  for (int stage = 1; stage <= 5; ++stage) {
    StageWiring w;
    const bool low = in_set(config_.low_stages, stage);
    const bool removed = low ? config_.without_rde : config_.without_dse;
    w.kind = low ? config_.low_block : config_.high_block;
    // With the interaction removed the skip falls back to the raw RGB
    // features, so the ablated path is observably depth-independent.
    w.skip_source = StreamId::rgb;
    if (!removed) {
      w.has_main = true;
      switch (config_.interaction_mode) {
        case InteractionMode::discrepant:
          w.enhanced = low ? StreamId::depth : StreamId::rgb;
          break;
        case InteractionMode::unidirectional_depth_to_rgb:
          w.enhanced = StreamId::rgb;
          break;
        case InteractionMode::bidirectional:
          w.enhanced = low ? StreamId::depth : StreamId::rgb;
          w.has_aux = true;
          break;
      }
    } else if (!low && stage == top_stage &&
               !config_.disable_top_addition_probe) {
      w.top_addition = true;
    }
    wiring_[stage - 1] = w;

    const int channels = config_.backbone.stage_channels[stage - 1];
    if (w.has_main) {
      main_blocks_[stage - 1] = make_block(w.kind, channels, rng);
      add_child("stage" + std::to_string(stage) + ".main",
                main_blocks_[stage - 1].get());
    }
    if (w.has_aux) {
      aux_blocks_[stage - 1] = make_block(w.kind, channels, rng);
      add_child("stage" + std::to_string(stage) + ".aux",
                aux_blocks_[stage - 1].get());
    }
  }

  decoder_ = std::make_unique<DdrDecoder>(config_.backbone.stage_channels, rng,
                                          !config_.without_ddr);
  add_child("decoder", decoder_.get());
}

InteractionBlock* CdiNet::main_block(int stage_index) const {
  return main_blocks_[stage_index - 1].get();
}

InteractionBlock* CdiNet::aux_block(int stage_index) const {
  return aux_blocks_[stage_index - 1].get();
}

void CdiNet::check_inputs(const Var& rgb, const Var& depth) const {
  const Shape r = rgb->value.shape();
  const Shape d = depth->value.shape();
  if (r != d) {
    throw ShapeError("rgb and depth inputs must match, got " + r.str() +
                     " vs " + d.str());
  }
  if (r.c != 3) {
    throw ShapeError("inputs must have 3 channels (depth replicated), got " +
                     r.str());
  }
  if (r.h % 16 != 0 || r.w % 16 != 0) {
    throw ShapeError("input resolution not divisible by 16: " + r.str());
  }
}

CdiNet::Trace CdiNet::forward_trace(const Var& rgb, const Var& depth) const {
  check_inputs(rgb, depth);
  Trace trace;
  Var rgb_cur = rgb;
  Var depth_cur = depth;
  for (int stage = 1; stage <= 5; ++stage) {
    Var f_r = rgb_encoder_->encode_stage(rgb_cur, stage);
    Var f_d = depth_encoder_->encode_stage(depth_cur, stage);
    const StageWiring& w = wiring_[stage - 1];
    Var next_r = f_r;
    Var next_d = f_d;
    Var skip;
    if (w.has_main) {
      const bool to_rgb = (w.enhanced == StreamId::rgb);
      Var out = main_blocks_[stage - 1]->forward(to_rgb ? f_r : f_d,
                                                 to_rgb ? f_d : f_r);
      (to_rgb ? next_r : next_d) = out;
      skip = out;
    } else if (w.top_addition) {
      skip = ops::add(f_r, f_d);
    } else {
      skip = (w.skip_source == StreamId::rgb) ? f_r : f_d;
    }
    if (w.has_aux) {
      const bool to_rgb = (w.enhanced != StreamId::rgb);  // mirror direction
      Var out = aux_blocks_[stage - 1]->forward(to_rgb ? f_r : f_d,
                                                to_rgb ? f_d : f_r);
      (to_rgb ? next_r : next_d) = out;
    }
    trace.rgb_stages.push_back(next_r);
    trace.depth_stages.push_back(next_d);
    trace.skips.push_back(skip);
    rgb_cur = next_r;
    depth_cur = next_d;
  }
  trace.logits = decoder_->decode(trace.skips);
  trace.prediction = DdrDecoder::predict(trace.logits);
  return trace;
}

Var CdiNet::forward(const Var& rgb, const Var& depth) const {
  return forward_trace(rgb, depth).prediction;
}

std::unique_ptr<CdiNet> build_network(const NetworkConfig& config,
                                      std::uint64_t seed) {
  return std::make_unique<CdiNet>(config, seed);
}

std::size_t count_parameters(const CdiNet& net) {
  return net.parameter_count();
}

std::vector<std::string> variant_names() {
  return {"no1", "no2", "no3", "without_rde", "without_dse", "without_ddr",
          "rde_low3", "swap_low_dse", "swap_high_rde", "swap_both"};
}

NetworkConfig make_variant(const std::string& name,
                           const BackboneConfig& backbone) {
  NetworkConfig cfg;
  cfg.backbone = backbone;
  if (name == "no1" || name == "default") {
    // full model
  } else if (name == "no2") {
    cfg.interaction_mode = InteractionMode::unidirectional_depth_to_rgb;
  } else if (name == "no3") {
    cfg.interaction_mode = InteractionMode::bidirectional;
  } else if (name == "without_rde") {
    cfg.without_rde = true;
  } else if (name == "without_dse") {
    cfg.without_dse = true;
  } else if (name == "without_ddr") {
    cfg.without_ddr = true;
  } else if (name == "rde_low3") {
    cfg.low_stages = {1, 2, 3};
    cfg.high_stages = {4, 5};
  } else if (name == "swap_low_dse") {
    cfg.low_block = BlockKind::dse;
  } else if (name == "swap_high_rde") {
    cfg.high_block = BlockKind::rde;
  } else if (name == "swap_both") {
    cfg.low_block = BlockKind::dse;
    cfg.high_block = BlockKind::rde;
  } else {
    throw ConfigError("unknown variant '" + name + "'");
  }
  cfg.validate();
  return cfg;
}

void save_checkpoint(
    const std::filesystem::path& path, const CdiNet& net, int epoch,
    const nlohmann::json& extra_meta,
    const std::vector<std::pair<std::string, Tensor>>& extra_tensors) {
  TensorArchive archive;
  archive.meta["format"] = "cdinet-checkpoint";
  archive.meta["epoch"] = epoch;
  archive.meta["config"] = net.config().to_json();
  if (!extra_meta.empty()) archive.meta["extra"] = extra_meta;
  for (auto& [name, p] : net.named_parameters()) {
    archive.add(name, p->value);
  }
  for (const auto& [name, t] : extra_tensors) {
    archive.add(name, t);
  }
  archive.save(path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  LoadedCheckpoint out;
  out.archive = TensorArchive::load(path);
  if (out.archive.meta.value("format", std::string()) != "cdinet-checkpoint") {
    throw IoError("file " + path.string() + " is not a cdinet checkpoint");
  }
  out.epoch = out.archive.meta.value("epoch", 0);
  out.config = NetworkConfig::from_json(out.archive.meta.at("config"));
  return out;
}

void apply_checkpoint(CdiNet& net, const TensorArchive& archive) {
  for (auto& [name, p] : net.named_parameters()) {
    const Tensor* src = archive.find(name);
    if (!src) throw IoError("checkpoint is missing parameter '" + name + "'");
    if (src->shape() != p->value.shape()) {
      throw IoError("checkpoint parameter '" + name + "' has shape " +
                    src->shape().str() + ", expected " +
                    p->value.shape().str());
    }
    p->value = *src;
  }
}

}  // namespace cdinet
