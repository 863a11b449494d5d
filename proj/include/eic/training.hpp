#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eic/approaches.hpp"
#include "eic/corpus.hpp"
#include "eic/evaluation.hpp"
#include "eic/tiny_encoder.hpp"

namespace eic {

/// Adam with linear warmup, then a constant rate.
struct OptimizerConfig {
  /// 0 selects the mode default: 2e-4 for adapters, 2e-5 for full fine-tuning.
  double learning_rate = 0.0;
  int batch_size = 16;
  double warmup_fraction = 0.03;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

double effective_learning_rate(const OptimizerConfig& opt, FinetuneMode mode);

enum class SelectionMetric { macro_f1, accuracy };

struct TrainConfig {
  ApproachConfig approach;
  FinetuneConfig finetune;
  OptimizerConfig optimizer;
  SelectionMetric selection = SelectionMetric::macro_f1;
  /// Where epoch-N/checkpoint.json, metrics.json and run.json go; empty keeps checkpoints in memory.
  std::filesystem::path checkpoint_dir;
};

/// Throws ConfigError listing every violation.
void validate(const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean per-sample loss over the epoch
  double val_accuracy = 0.0;
  double val_macro_f1 = 0.0;
  double val_air = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> trace;
  int selected_epoch = 0;
  /// Checkpoint document of the selected epoch.
  nlohmann::json selected;
  /// Checkpoint documents of every epoch (also written to disk when a directory is set).
  std::vector<nlohmann::json> checkpoints;
};

/// Epoch with the best selection metric (other metric breaks ties, then the earlier epoch).
int select_epoch(const std::vector<EpochRecord>& trace, SelectionMetric metric);

/// Fine-tunes `backend` and a fresh head on data.train, validating after each epoch.
/// Throws NumericError with epoch and step on a non-finite loss, DataError on an empty split.
TrainResult train(const TrainConfig& cfg, const TaskSpec& task, const DatasetSplit& data,
                  TrainableBackend& backend);

/// Continues a run from the checkpoint after `from_epoch`; the result is bit-identical to an
/// uninterrupted run. `backend` must be freshly constructed with the original options.
TrainResult resume(const TrainConfig& cfg, const TaskSpec& task, const DatasetSplit& data,
                   TrainableBackend& backend, int from_epoch);

// Checkpoint documents: {format_version, checksum, payload}; the checksum is FNV-1a over the
// serialized payload.
inline constexpr int kCheckpointVersion = 1;

nlohmann::json seal_checkpoint(nlohmann::json payload);
/// Verifies version and checksum and returns the payload; throws ModelError otherwise.
nlohmann::json open_checkpoint(const nlohmann::json& doc);
nlohmann::json read_checkpoint(const std::filesystem::path& path);
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int epoch);

/// Restores backend weights from a payload and returns the classifier stored with them.
Classifier restore(const nlohmann::json& payload, TrainableBackend& backend);

/// Encoder options recorded in the checkpoint, so a checkpoint is loadable on its own.
nlohmann::json to_json(const TinyEncoder::Options& opts);
TinyEncoder::Options tiny_options_from_json(const nlohmann::json& j);

/// Builds a TinyEncoder from a checkpoint payload and restores its weights and head.
std::pair<std::unique_ptr<TinyEncoder>, Classifier> load_tiny_checkpoint(const nlohmann::json& payload);

}  // namespace eic
