#pragma once

// The trainable classification head that sits on top of frozen image/text
// embeddings:
//
//   projection  -> per-modality affine, d_embed -> d_proj
//   adapter     -> v <- alpha * A(v) + (1 - alpha) * v,
//                  A = relu . up . relu . down (bottleneck d_proj / reduction)
//   fusion      -> elementwise product (or concatenation for the baseline)
//   pre-output  -> affine d_fused -> d_fused, cosine path only
//   classifier  -> sigma-scaled cosine logits, or a plain affine layer
//
// Each stage can be toggled off to reproduce the ablation ladder.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memeclip/embedding_store.hpp"
#include "memeclip/numerics.hpp"

namespace memeclip {

enum class ClassifierKind { linear, cosine };
enum class InitKind { random, sai };
enum class FusionKind { multiply, concat };

std::string_view to_string(ClassifierKind kind) noexcept;
std::string_view to_string(InitKind kind) noexcept;
std::string_view to_string(FusionKind kind) noexcept;
ClassifierKind parse_classifier_kind(std::string_view name);
InitKind parse_init_kind(std::string_view name);
FusionKind parse_fusion_kind(std::string_view name);

struct HeadConfig {
  int d_embed = 768;
  int d_proj = 1024;
  int adapter_reduction = 4;
  double alpha = 0.2;
  double sigma = 30.0;
  double eps = kNormEps;
  int n_classes = 2;
  bool use_projection = true;
  bool use_adapters = true;
  ClassifierKind classifier_kind = ClassifierKind::cosine;
  InitKind init_kind = InitKind::sai;
  FusionKind fusion_kind = FusionKind::multiply;

  /// Throws a configuration error on any inconsistent combination.
  void validate() const;

  std::size_t unimodal_dim() const noexcept {
    return static_cast<std::size_t>(use_projection ? d_proj : d_embed);
  }
  std::size_t fused_dim() const noexcept {
    return fusion_kind == FusionKind::multiply ? unimodal_dim() : 2 * unimodal_dim();
  }
  std::size_t bottleneck_dim() const noexcept { return static_cast<std::size_t>(d_proj / adapter_reduction); }
  bool has_pre_output() const noexcept { return classifier_kind == ClassifierKind::cosine; }

  bool operator==(const HeadConfig&) const = default;
};

struct Affine {
  DenseMatrix weight;  // out x in
  Vector bias;         // out

  static Affine zeros(std::size_t out, std::size_t in) { return {DenseMatrix(out, in), Vector(out, 0.0)}; }
  bool operator==(const Affine&) const = default;
};

struct Adapter {
  Affine down;
  Affine up;

  bool operator==(const Adapter&) const = default;
};

/// Trainable parameters. Components switched off in the config are absent.
/// The same type doubles as a gradient record and as Adam moment storage.
struct HeadParams {
  std::optional<Affine> proj_image;
  std::optional<Affine> proj_text;
  std::optional<Adapter> adapter_image;
  std::optional<Adapter> adapter_text;
  std::optional<Affine> pre_output;
  DenseMatrix classifier_weight;  // n_classes x d_fused
  Vector classifier_bias;         // n_classes for the linear classifier, empty otherwise

  /// Every tensor in a fixed order (also the checkpoint order).
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
  std::vector<std::string> tensor_names() const;

  std::size_t scalar_count() const;

  /// Concatenation of tensors() into one vector, and the inverse.
  Vector flatten() const;
  void unflatten(std::span<const double> flat);

  bool operator==(const HeadParams&) const = default;
};

/// Zero-filled parameters shaped for `config`.
HeadParams zero_params(const HeadConfig& config);
HeadParams zeros_like(const HeadParams& params);

/// Uniform +-sqrt(1/fan_in) weights and zero biases drawn from `seed`;
/// with InitKind::sai the classifier rows are then replaced by the
/// text-projected prompt embeddings.
HeadParams init_params(const HeadConfig& config, std::uint64_t seed, const ClassPromptSet* prompts = nullptr);

/// Sets classifier row x to proj_text(prompts[x]) using the current text
/// projection.
void semantic_init(HeadParams& params, const HeadConfig& config, const ClassPromptSet& prompts);

struct ModalityCache {
  Vector input;      // raw embedding
  Vector projected;  // after projection (copy of input when projection is off)
  Vector down_pre;   // adapter bottleneck pre-activation
  Vector hidden;     // relu(down_pre)
  Vector up_pre;     // adapter expansion pre-activation
  Vector output;     // representation handed to fusion
};

struct ForwardCache {
  HeadConfig config;
  ModalityCache image;
  ModalityCache text;
  Vector fused;
  Vector classifier_input;  // pre_output(fused) on the cosine path, fused otherwise
  Vector logits;
};

ForwardCache forward(const HeadParams& params, const HeadConfig& config, std::span<const double> image_emb,
                     std::span<const double> text_emb);

/// forward over a batch. Weight rows are reused across samples; every cache
/// is bitwise equal to the one forward() would produce.
std::vector<ForwardCache> forward_batch(const HeadParams& params, const HeadConfig& config, const Batch& images,
                                        const Batch& texts);

/// Sum of backward_accumulate over the batch, accumulated in sample order.
void backward_accumulate_batch(const HeadParams& params, const HeadConfig& config,
                               const std::vector<ForwardCache>& caches, const std::vector<Vector>& dlogits,
                               HeadParams& grads);

/// Adds d(loss)/d(theta) for one sample into `grads` (shaped like params).
void backward_accumulate(const HeadParams& params, const HeadConfig& config, const ForwardCache& cache,
                         std::span<const double> dlogits, HeadParams& grads);

HeadParams backward(const HeadParams& params, const HeadConfig& config, const ForwardCache& cache,
                    std::span<const double> dlogits);

/// Trainable scalars implied by the config; encoders are frozen and excluded.
std::int64_t count_params(const HeadConfig& config);

}  // namespace memeclip
