#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aastereo/data_io.hpp"
#include "aastereo/model.hpp"

namespace aastereo {

struct TrainerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Fractions of the total step count at which the learning rate halves.
  std::vector<double> halving_points{0.6, 0.75, 0.9};
  std::size_t batch_size = 1;
  std::size_t steps = 500;
  // Supervise only the final prediction (fine-tuning mode).
  bool final_only = false;
  // Empty means LossWeights::defaults for the number of predictions.
  std::vector<double> loss_weights;
  std::uint64_t seed = 1;

  void validate() const;
  double learning_rate_at(std::size_t step) const;

  // Keys live in the [train] section.
  void write(IniDocument& doc) const;
  static TrainerConfig read(const IniDocument& doc);
  static const std::vector<std::string>& keys();
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor> m;  // one per parameter, in Model::visit order
  std::vector<Tensor> v;
};

// One Adam update. Parameters whose gradient is entirely zero on a fresh
// state stay bitwise unchanged.
void adam_step(Model& model, AdamState& state, const std::vector<Tensor>& grads,
               const TrainerConfig& config, double learning_rate);

struct SampleLoss {
  double total = 0.0;
  std::vector<double> terms;  // per prediction, finest first
};

// Loss of one sample and, when `grads` is given, its parameter gradients
// (added into `grads` scaled by `grad_scale`, in Model::visit order).
SampleLoss sample_loss(Model& model, const StereoPair& sample, const TrainerConfig& config,
                       std::vector<Tensor>* grads = nullptr, double grad_scale = 1.0);

// Metrics pooled over every valid pixel of every sample.
MetricsReport evaluate_model(const Model& model, const std::vector<StereoPair>& samples);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // steps completed so far
  double train_loss = 0.0;  // mean total loss over the epoch's steps
  double val_epe = 0.0;     // NaN without a validation set
  double val_over_1px = 0.0;

  // "epoch<TAB>train_loss<TAB>val_epe<TAB>val_over_1px"
  std::string to_line() const;
};

struct TrainResult {
  std::vector<EpochLog> log;
  AdamState optimizer;
  std::string rng_state;
};

// Runs config.steps Adam steps over `train_set`, reshuffled every epoch (one
// epoch is one pass over the set). After each epoch, and after the last
// step, the validation set is scored and `on_epoch` is called. Throws
// NonFiniteLossError naming the step if the loss becomes NaN or infinite.
TrainResult train(Model& model, const std::vector<StereoPair>& train_set,
                  const std::vector<StereoPair>& validation_set, const TrainerConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

// ---------------------------------------------------------------------------
// Checkpoint file: "AASTEREO", uint32 version, config text, parameter table
// (name, shape, raw little-endian doubles), optional Adam moments, RNG
// state. All integers little-endian.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  std::optional<AdamState> optimizer;
  std::string rng_state;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
// Rebuilds the model from the stored config, then fills it in; rejects a
// parameter table that disagrees with that config, naming the parameter.
Checkpoint load_checkpoint(const std::filesystem::path& path);
// As above, but also requires the stored config to produce the same
// parameter table as `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace aastereo
