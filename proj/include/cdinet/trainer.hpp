#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "cdinet/data.hpp"
#include "cdinet/network.hpp"

namespace cdinet {

struct TrainConfig {
  int batch_size = 4;
  double base_lr = 1e-4;
  double lr_decay_factor = 5.0;
  int lr_decay_period = 40;  // epochs
  int total_epochs = 100;
  std::uint64_t seed = 1;
  int checkpoint_period = 10;  // epochs
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool augment = true;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Step-decayed schedule: base_lr / factor^floor(epoch / period).
double lr_at_epoch(const TrainConfig& cfg, int epoch);

/// Mean binary cross-entropy with predictions clamped to [1e-7, 1-1e-7].
Var bce_loss(const Var& pred, const Tensor& gt);

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Var> params, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  void zero_grad();
  void step(double lr);

  std::int64_t step_count() const { return step_count_; }
  /// Moment tensors for checkpointing, keyed by the given parameter names.
  std::vector<std::pair<std::string, Tensor>> state_tensors(
      const std::vector<std::string>& param_names) const;
  void load_state(const TensorArchive& archive,
                  const std::vector<std::string>& param_names,
                  std::int64_t step_count);

 private:
  std::vector<Var> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  double beta1_, beta2_, eps_;
  std::int64_t step_count_ = 0;
};

/// Feeds training batches; implementations are the in-memory fixture and
/// the disk loader.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual RGBDSample get(std::size_t index, Rng& rng, bool augmented) = 0;
};

class InMemorySource : public SampleSource {
 public:
  explicit InMemorySource(std::vector<RGBDSample> samples)
      : samples_(std::move(samples)) {}
  std::size_t size() const override { return samples_.size(); }
  RGBDSample get(std::size_t index, Rng& rng, bool augmented) override;

 private:
  std::vector<RGBDSample> samples_;
};

class DiskSource : public SampleSource {
 public:
  DiskSource(std::vector<ManifestEntry> entries, int target_size)
      : entries_(std::move(entries)), target_size_(target_size) {}
  std::size_t size() const override { return entries_.size(); }
  RGBDSample get(std::size_t index, Rng& rng, bool augmented) override;

 private:
  std::vector<ManifestEntry> entries_;
  int target_size_;
};

struct Batch {
  Tensor rgb;
  Tensor depth;
  Tensor gt;
  std::vector<std::string> ids;
};

Batch collate(const std::vector<RGBDSample>& samples);

struct TrainOutcome {
  std::vector<double> epoch_mean_loss;
  std::filesystem::path final_checkpoint;
};

/// End-to-end loop: shuffled drop-last batches, BCE supervision on the
/// final prediction, Adam updates, periodic checkpoints (every
/// checkpoint_period epochs plus final; best-by-MAE when a validation
/// source is given). A non-finite loss aborts with the batch ids.
TrainOutcome train(CdiNet& net, const TrainConfig& cfg, SampleSource& data,
                   const std::filesystem::path& out_dir,
                   SampleSource* validation = nullptr,
                   const std::function<void(int, double)>& epoch_hook = {});

/// Mean absolute error of the network over a sample source (no gradients).
double evaluate_mae(CdiNet& net, SampleSource& data);

}  // namespace cdinet
