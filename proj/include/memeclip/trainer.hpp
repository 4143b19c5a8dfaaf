#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "memeclip/embedding_store.hpp"
#include "memeclip/head.hpp"
#include "memeclip/metrics.hpp"

namespace memeclip {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 16;
  int epochs = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::string task = "hate";
  // Model selection is always macro AUROC on the validation split.

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct AdamState {
  std::uint64_t step_count = 0;
  HeadParams first_moment;
  HeadParams second_moment;

  static AdamState zeros_like(const HeadParams& params);
};

/// Bias-corrected Adam update, in place. No weight decay.
void adam_step(HeadParams& params, const HeadParams& grads, AdamState& state, const TrainConfig& config);

struct EpochRecord {
  double train_loss_mean = 0.0;
  double val_accuracy = 0.0;
  double val_macro_auroc = 0.0;
  double val_macro_f1 = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::optional<std::size_t> best_epoch;  // 0-based, earliest maximum of val_macro_auroc

  bool operator==(const TrainHistory&) const = default;
};

struct FitResult {
  HeadParams best_params;   // snapshot at history.best_epoch
  HeadParams final_params;  // state after the last epoch
  TrainHistory history;
};

/// Mini-batch training on the task's train view, keeping the snapshot with
/// the best validation macro AUROC. Deterministic in (seed, data, configs).
FitResult fit(const EmbeddingBundle& bundle, const ClassPromptSet* prompts, const HeadConfig& head_config,
              const TrainConfig& train_config);

MetricsReport evaluate_view(const HeadParams& params, const HeadConfig& config, const TaskView& view,
                            const std::string& task, Split split);

MetricsReport evaluate(const HeadParams& params, const HeadConfig& config, const EmbeddingBundle& bundle,
                       const std::string& task, Split split);

struct Checkpoint {
  HeadParams params;
  HeadConfig head_config;
  TrainConfig train_config;
  TrainHistory history;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// As above, and throws a configuration error when the stored head config
/// differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const HeadConfig& expected);

}  // namespace memeclip
