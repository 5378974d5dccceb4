#include "cdinet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

namespace cdinet {

void TrainConfig::validate() const {
  if (batch_size <= 0 || base_lr <= 0.0 || lr_decay_period <= 0 ||
      total_epochs <= 0 || checkpoint_period <= 0) {
    throw ConfigError("train config values must be positive");
  }
  if (lr_decay_factor <= 1.0) {
    throw ConfigError("lr_decay_factor must be > 1");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"base_lr", base_lr},
          {"lr_decay_factor", lr_decay_factor},
          {"lr_decay_period", lr_decay_period},
          {"total_epochs", total_epochs},
          {"seed", seed},
          {"checkpoint_period", checkpoint_period},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_eps", adam_eps},
          {"augment", augment}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.base_lr = j.value("base_lr", cfg.base_lr);
  cfg.lr_decay_factor = j.value("lr_decay_factor", cfg.lr_decay_factor);
  cfg.lr_decay_period = j.value("lr_decay_period", cfg.lr_decay_period);
  cfg.total_epochs = j.value("total_epochs", cfg.total_epochs);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.checkpoint_period = j.value("checkpoint_period", cfg.checkpoint_period);
  cfg.adam_beta1 = j.value("adam_beta1", cfg.adam_beta1);
  cfg.adam_beta2 = j.value("adam_beta2", cfg.adam_beta2);
  cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
  cfg.augment = j.value("augment", cfg.augment);
  cfg.validate();
  return cfg;
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.total_epochs) {
    throw ConfigError("epoch " + std::to_string(epoch) +
                      " outside [0, " + std::to_string(cfg.total_epochs) + ")");
  }
  const int steps = epoch / cfg.lr_decay_period;
  return cfg.base_lr / std::pow(cfg.lr_decay_factor, steps);
}

Var bce_loss(const Var& pred, const Tensor& gt) {
  return ops::bce_mean(pred, gt, 1e-7);
}

AdamOptimizer::AdamOptimizer(std::vector<Var> params, double beta1,
                             double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Var& p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape()));
    v_.push_back(Tensor::zeros(p->value.shape()));
  }
}

void AdamOptimizer::zero_grad() {
  for (Var& p : params_) p->zero_grad();
}

void AdamOptimizer::step(double lr) {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i];
    if (p->grad.empty()) continue;  // parameter untouched by this graph
    for (std::size_t j = 0; j < p->value.size(); ++j) {
      const double g = p->grad[j];
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
      const double m_hat = m_[i][j] / bc1;
      const double v_hat = v_[i][j] / bc2;
      p->value[j] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

std::vector<std::pair<std::string, Tensor>> AdamOptimizer::state_tensors(
    const std::vector<std::string>& param_names) const {
  if (param_names.size() != params_.size()) {
    throw ConfigError("optimizer state naming mismatch");
  }
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.emplace_back("optim.m." + param_names[i], m_[i]);
    out.emplace_back("optim.v." + param_names[i], v_[i]);
  }
  return out;
}

void AdamOptimizer::load_state(const TensorArchive& archive,
                               const std::vector<std::string>& param_names,
                               std::int64_t step_count) {
  if (param_names.size() != params_.size()) {
    throw ConfigError("optimizer state naming mismatch");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor* m = archive.find("optim.m." + param_names[i]);
    const Tensor* v = archive.find("optim.v." + param_names[i]);
    if (!m || !v) {
      throw IoError("checkpoint lacks optimizer state for " + param_names[i]);
    }
    m_[i] = *m;
    v_[i] = *v;
  }
  step_count_ = step_count;
}

RGBDSample InMemorySource::get(std::size_t index, Rng& rng, bool augmented) {
  const RGBDSample& s = samples_.at(index);
  return augmented ? augment(s, rng) : s;
}

RGBDSample DiskSource::get(std::size_t index, Rng& rng, bool augmented) {
  RGBDSample s = load_sample(entries_.at(index), target_size_);
  return augmented ? augment(s, rng) : s;
}

Batch collate(const std::vector<RGBDSample>& samples) {
  if (samples.empty()) throw ConfigError("collate on empty batch");
  const Shape rs = samples[0].rgb.shape();
  const Shape gs = samples[0].gt.shape();
  const int b = static_cast<int>(samples.size());
  Batch batch;
  batch.rgb = Tensor({b, rs.c, rs.h, rs.w});
  batch.depth = Tensor({b, rs.c, rs.h, rs.w});
  batch.gt = Tensor({b, gs.c, gs.h, gs.w});
  const std::size_t rgb_block = rs.total();
  const std::size_t gt_block = gs.total();
  for (int i = 0; i < b; ++i) {
    const RGBDSample& s = samples[i];
    if (s.rgb.shape() != rs || s.gt.shape() != gs) {
      throw ShapeError("batch samples disagree in size");
    }
    std::copy(s.rgb.data(), s.rgb.data() + rgb_block,
              batch.rgb.data() + i * rgb_block);
    std::copy(s.depth.data(), s.depth.data() + rgb_block,
              batch.depth.data() + i * rgb_block);
    std::copy(s.gt.data(), s.gt.data() + gt_block,
              batch.gt.data() + i * gt_block);
    batch.ids.push_back(s.id);
  }
  return batch;
}

double evaluate_mae(CdiNet& net, SampleSource& data) {
  autograd::NoGradGuard guard;
  Rng rng(0);
  double total = 0.0;
  std::size_t pixels = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    RGBDSample s = data.get(i, rng, /*augmented=*/false);
    Var pred = net.forward(make_var(s.rgb), make_var(s.depth));
    for (std::size_t j = 0; j < pred->value.size(); ++j) {
      total += std::abs(pred->value[j] - s.gt[j]);
    }
    pixels += pred->value.size();
  }
  return pixels > 0 ? total / static_cast<double>(pixels) : 0.0;
}

TrainOutcome train(CdiNet& net, const TrainConfig& cfg, SampleSource& data,
                   const std::filesystem::path& out_dir,
                   SampleSource* validation,
                   const std::function<void(int, double)>& epoch_hook) {
  cfg.validate();
  if (data.size() == 0) throw ConfigError("training set is empty");
  std::filesystem::create_directories(out_dir);

  std::vector<std::string> param_names;
  std::vector<Var> params;
  for (auto& [name, p] : net.named_parameters()) {
    param_names.push_back(name);
    params.push_back(p);
  }
  AdamOptimizer optimizer(params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  Rng rng(cfg.seed);

  const auto write_ckpt = [&](const std::filesystem::path& path, int epoch) {
    nlohmann::json extra = {{"train_config", cfg.to_json()},
                            {"adam_step", optimizer.step_count()}};
    save_checkpoint(path, net, epoch, extra,
                    optimizer.state_tensors(param_names));
  };

  TrainOutcome outcome;
  double best_val_mae = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    // Fisher-Yates with the run's RNG; deterministic per seed.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.uniform_int(static_cast<int>(i))]);
    }
    const std::size_t batches = data.size() / cfg.batch_size;  // drop last
    if (batches == 0) {
      throw ConfigError("batch_size " + std::to_string(cfg.batch_size) +
                        " exceeds training set size " +
                        std::to_string(data.size()));
    }
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<RGBDSample> samples;
      for (int i = 0; i < cfg.batch_size; ++i) {
        samples.push_back(
            data.get(order[b * cfg.batch_size + i], rng, cfg.augment));
      }
      Batch batch = collate(samples);
      optimizer.zero_grad();
      Var pred = net.forward(make_var(batch.rgb), make_var(batch.depth));
      Var loss = bce_loss(pred, batch.gt);
      const double loss_value = loss->value[0];
      if (!std::isfinite(loss_value)) {
        std::string ids;
        for (const auto& id : batch.ids) ids += " " + id;
        throw TrainingError("non-finite loss at epoch " +
                            std::to_string(epoch) + " batch " +
                            std::to_string(b) + ", samples:" + ids);
      }
      backward(loss);
      optimizer.step(lr);
      loss_sum += loss_value;
    }
    const double mean_loss = loss_sum / static_cast<double>(batches);
    outcome.epoch_mean_loss.push_back(mean_loss);
    std::cout << "epoch " << (epoch + 1) << "/" << cfg.total_epochs
              << " lr " << lr << " loss " << mean_loss << std::endl;
    if (epoch_hook) epoch_hook(epoch, mean_loss);

    if ((epoch + 1) % cfg.checkpoint_period == 0) {
      write_ckpt(out_dir / ("checkpoint_epoch" + std::to_string(epoch + 1) +
                            ".ckpt"),
                 epoch + 1);
    }
    if (validation && validation->size() > 0) {
      const double val_mae = evaluate_mae(net, *validation);
      std::cout << "  validation mae " << val_mae << std::endl;
      if (val_mae < best_val_mae) {
        best_val_mae = val_mae;
        write_ckpt(out_dir / "best.ckpt", epoch + 1);
      }
    }
  }

  outcome.final_checkpoint = out_dir / "final.ckpt";
  write_ckpt(outcome.final_checkpoint, cfg.total_epochs);
  return outcome;
}

}  // namespace cdinet
