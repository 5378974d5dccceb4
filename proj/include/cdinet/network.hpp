#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdinet/backbone.hpp"
#include "cdinet/checkpoint.hpp"
#include "cdinet/decoder.hpp"
#include "cdinet/dse.hpp"
#include "cdinet/rde.hpp"

namespace cdinet {

/// Direction pattern of the cross-modality guidance.
///   discrepant  - detail blocks enhance depth at the low stages, semantic
///                 blocks enhance RGB at the high stages (No.1)
///   unidirectional_depth_to_rgb - every block enhances the RGB stream (No.2)
///   bidirectional - both streams get enhanced at every interacting
///                 stage, doubling the interaction modules (No.3)
enum class InteractionMode {
  discrepant,
  unidirectional_depth_to_rgb,
  bidirectional,
};

enum class BlockKind { rde, dse };
enum class StreamId { rgb, depth };

struct NetworkConfig {
  BackboneConfig backbone;
  InteractionMode interaction_mode = InteractionMode::discrepant;
  bool without_rde = false;
  bool without_dse = false;
  bool without_ddr = false;
  std::vector<int> low_stages = {1, 2};
  std::vector<int> high_stages = {3, 4, 5};
  BlockKind low_block = BlockKind::rde;    // swapped variants use dse here
  BlockKind high_block = BlockKind::dse;   // ... and rde here
  bool dse_alt_addition = false;
  int reduction_ratio = 16;
  /// Probe-harness switch: with without_dse, drop the top-layer rgb+depth
  /// addition so the RGB path is observably depth-independent.
  bool disable_top_addition_probe = false;

  void validate() const;
  nlohmann::json to_json() const;
  static NetworkConfig from_json(const nlohmann::json& j);
};

/// Two-stream encoder + per-stage cross-modality interaction + dense
/// decoder. Inputs are a (N,3,H,W) RGB tensor and a (N,3,H,W) replicated
/// depth tensor, H and W divisible by 16; output is a (N,1,H,W) saliency
/// map in (0,1).
class CdiNet : public Module {
 public:
  struct StageWiring {
    bool has_main = false;     // block enhancing `enhanced`
    bool has_aux = false;      // mirror block (bidirectional mode)
    BlockKind kind = BlockKind::rde;
    StreamId enhanced = StreamId::depth;     // stream the main block feeds
    StreamId skip_source = StreamId::depth;  // used when no block present
    bool top_addition = false;               // skip = f_r + f_d (w/o DSE top)
  };

  struct Trace {
    std::vector<Var> rgb_stages;    // stream state after each stage
    std::vector<Var> depth_stages;
    std::vector<Var> skips;
    Var logits;
    Var prediction;
  };

  CdiNet(const NetworkConfig& config, std::uint64_t seed);

  Trace forward_trace(const Var& rgb, const Var& depth) const;
  Var forward(const Var& rgb, const Var& depth) const;

  const NetworkConfig& config() const { return config_; }
  const std::array<StageWiring, 5>& wiring() const { return wiring_; }

  InteractionBlock* main_block(int stage_index) const;
  InteractionBlock* aux_block(int stage_index) const;
  const VggStream& rgb_encoder() const { return *rgb_encoder_; }
  const VggStream& depth_encoder() const { return *depth_encoder_; }
  const DdrDecoder& decoder() const { return *decoder_; }

 private:
  void check_inputs(const Var& rgb, const Var& depth) const;
  std::unique_ptr<InteractionBlock> make_block(BlockKind kind, int channels,
                                               Rng& rng) const;

  NetworkConfig config_;
  std::array<StageWiring, 5> wiring_;
  std::unique_ptr<VggStream> rgb_encoder_;
  std::unique_ptr<VggStream> depth_encoder_;
  std::array<std::unique_ptr<InteractionBlock>, 5> main_blocks_;
  std::array<std::unique_ptr<InteractionBlock>, 5> aux_blocks_;
  std::unique_ptr<DdrDecoder> decoder_;
};

std::unique_ptr<CdiNet> build_network(const NetworkConfig& config,
                                      std::uint64_t seed = 1);

std::size_t count_parameters(const CdiNet& net);

/// Named ablation / interaction-mode configurations for the CLI and tests.
std::vector<std::string> variant_names();
NetworkConfig make_variant(const std::string& name,
                           const BackboneConfig& backbone);

// ---- checkpointing -------------------------------------------------------

void save_checkpoint(
    const std::filesystem::path& path, const CdiNet& net, int epoch,
    const nlohmann::json& extra_meta = nlohmann::json::object(),
    const std::vector<std::pair<std::string, Tensor>>& extra_tensors = {});

struct LoadedCheckpoint {
  NetworkConfig config;
  int epoch = 0;
  TensorArchive archive;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Restores every network parameter from the archive; errors on missing or
/// mis-shaped keys.
void apply_checkpoint(CdiNet& net, const TensorArchive& archive);

}  // namespace cdinet
