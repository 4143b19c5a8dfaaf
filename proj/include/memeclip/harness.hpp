#pragma once

// Experiment drivers behind the command-line tool: multi-seed training,
// evaluation, the ablation ladder, gradient checks and split generation.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memeclip/embedding_store.hpp"
#include "memeclip/head.hpp"
#include "memeclip/metrics.hpp"
#include "memeclip/trainer.hpp"

namespace memeclip {

struct ExperimentConfig {
  std::filesystem::path bundle_path;
  std::optional<std::filesystem::path> prompts_path;
  std::string task = "hate";
  HeadConfig head;  // d_embed and n_classes are taken from the bundle
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::filesystem::path output_dir = "out";

  void validate() const;
};

struct MetricStats {
  double mean = 0.0;
  double std = 0.0;  // population (divisor n)
};

struct MetricsSummary {
  MetricStats accuracy;
  MetricStats macro_auroc;
  MetricStats macro_f1;
};

MetricsSummary aggregate(const std::vector<MetricsReport>& reports);

struct AblationVariant {
  std::string name;
  HeadConfig config;
};

/// CLIP -> +PL -> +FA -> +CC -> +SAI, each built from `base` (which supplies
/// dimensions, alpha and sigma).
std::vector<AblationVariant> ablation_ladder(const HeadConfig& base);

struct AblationRow {
  std::string variant_name;
  HeadConfig config;
  std::vector<MetricsReport> per_seed;  // test split
  MetricsSummary summary;
};

/// Every toggle combination the config invariants allow.
std::vector<HeadConfig> reachable_configs(const HeadConfig& base);
std::string describe_toggles(const HeadConfig& config);

struct GradcheckOptions {
  std::vector<int> d_embed{3, 8};
  std::vector<int> d_proj{4, 16};
  std::vector<int> n_classes{2, 4};
  int adapter_reduction = 4;
  int seeds = 50;
  int batch = 2;
  double h = 1e-5;
  double tolerance = 1e-4;
  /// Negates the analytic classifier-weight gradient; exercises the failure path.
  bool flip_classifier_sign = false;
};

struct GradcheckResult {
  std::string config_name;
  HeadConfig config;  // toggles; dims vary per seed
  int seeds = 0;
  double max_rel_error = 0.0;
  std::string worst_tensor;
  bool passed = false;
};

/// Relative error |a - n| / max(|a|, |n|, floor) used by all gradient checks.
/// Central differences at h = 1e-5 carry roughly eps_mach * |loss| / h of
/// round-off (about 4e-10 at sigma = 30), so entries below the floor are
/// effectively held to an absolute tolerance of floor * 1e-4 = 1e-8.
double gradient_rel_error(double analytic, double numeric) noexcept;
inline constexpr double kGradientErrorFloor = 1e-4;

/// Compares backward against central differences on one random instance.
GradcheckResult gradcheck_instance(const HeadConfig& config, std::uint64_t seed, const GradcheckOptions& options);

/// All reachable toggle configurations x every (d_embed, d_proj, n_classes)
/// combination x options.seeds.
std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& options);

/// Stratified (by hate label) seeded assignment of train/val/test tags.
EmbeddingBundle assign_splits(const EmbeddingBundle& bundle, std::array<double, 3> ratios, std::uint64_t seed);

/// Loaded inputs of an experiment, validated before any output is written.
struct ExperimentInputs {
  EmbeddingBundle bundle;
  std::optional<ClassPromptSet> prompts;
  HeadConfig head;
};

ExperimentInputs load_inputs(const ExperimentConfig& config, bool need_prompts);

/// Per seed: fit, checkpoint, and val/test report; then the aggregate.
/// Returns the aggregate JSON that was written.
nlohmann::json run_train(const ExperimentConfig& config);

/// Runs the five ladder variants x seeds; writes ablation.json and .csv.
std::vector<AblationRow> run_ablate(const ExperimentConfig& config);

nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows);
std::string ablation_to_csv(const std::vector<AblationRow>& rows);

nlohmann::json summary_to_json(const MetricsSummary& summary);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace memeclip
