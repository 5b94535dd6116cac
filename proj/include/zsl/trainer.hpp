#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zsl/checkpoint.hpp"
#include "zsl/dataset.hpp"
#include "zsl/errors.hpp"
#include "zsl/gzsl.hpp"
#include "zsl/losses.hpp"
#include "zsl/vit.hpp"

namespace zsl {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t steps_per_epoch = 100;
  double lr = 1e-4;
  double lambda1 = 1.0;  // rotation cross-entropy
  double lambda2 = 1.0;  // attribute MSE
  RotationPoolSpec pool;
  std::uint64_t seed = 7;
  std::size_t checkpoint_every = 0;  // epochs, 0 = never
  std::size_t eval_every = 0;        // epochs, 0 = never
  // Calibration factor for evaluation. Unset: sweep default_gamma_grid() and
  // report the best-H point.
  std::optional<double> gamma;
  BatchGeometry geometry;

  void validate() const;
};

struct StepRecord {
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  LossBreakdown loss;
  double wall_seconds = 0.0;
};

struct EvalRecord {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  GzslReport report;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
};

// One JSON object per line: steps first, then evaluations.
std::string train_log_jsonl(const TrainLog& log, bool with_timestamps = true);

// Raised when the total loss or any parameter stops being finite.
class NonFiniteLoss : public NumericError {
 public:
  NonFiniteLoss(std::uint64_t step, std::vector<std::string> batch_ids, std::string what);
  std::uint64_t step() const { return step_; }
  const std::vector<std::string>& batch_ids() const { return batch_ids_; }

 private:
  std::uint64_t step_;
  std::vector<std::string> batch_ids_;
};

struct TrainHooks {
  // After every checkpoint_every-th epoch.
  std::function<void(const ViTModel&, const TrainingState&)> on_checkpoint;
  std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
  TrainLog log;
  TrainingState state;
};

// Model weights drawn from the "init" stream of seed.
ViTModel init_model(const ViTConfig& config, std::uint64_t seed);
TrainingState initial_training_state(const ViTModel& model, const TrainConfig& config);

// Runs epochs x steps_per_epoch iterations of
// build_batch -> encode -> heads -> total_loss -> backward -> adam_step.
// Resuming continues from state->epochs_done with the saved optimizer and
// batch stream.
TrainResult train(ViTModel& model, const DatasetBundle& bundle, const TrainConfig& config,
                  std::optional<TrainingState> resume = std::nullopt, const TrainHooks& hooks = {});

// Cosine scores of every test_seen / test_unseen image against all classes.
ScoreMatrix score_test_set(const ViTModel& model, const DatasetBundle& bundle, std::size_t chunk = 64);
// Attribute predictions for a list of images, [n x M].
std::vector<std::vector<double>> predict_attributes(const ViTModel& model, std::span<const Tensor> images,
                                                    std::size_t chunk = 64);

// evaluate() at gamma, or the best-H point of the default sweep when unset.
GzslReport evaluate_scores(const ScoreMatrix& scores, std::optional<double> gamma);

struct AblationRow {
  PoolMode mode = PoolMode::kSeen;
  std::uint64_t initial_hash = 0;
  GzslReport report;
  TrainLog log;
};

// Trains one model per mode from identical initial weights and batch seed.
// threads > 1 runs modes concurrently; results are identical either way.
std::vector<AblationRow> run_ablation(const DatasetBundle& bundle, const ViTConfig& model_config,
                                      std::span<const PoolMode> modes, const TrainConfig& config,
                                      std::size_t threads = 1);

std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace zsl
