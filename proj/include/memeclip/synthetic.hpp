#pragma once

#include <cstdint>

#include "memeclip/embedding_store.hpp"

namespace memeclip {

/// Two-class separable data on the hate task: both embeddings of a sample
/// are the class indicator e_label plus Gaussian noise.
struct SeparableSpec {
  int n_train = 200;
  int n_val = 40;
  int n_test = 40;
  int d_embed = 8;
  double noise = 0.05;
  std::uint64_t seed = 7;
};

EmbeddingBundle make_separable_bundle(const SeparableSpec& spec);

/// Prompt rows equal to the class indicators, matching make_separable_bundle.
ClassPromptSet make_separable_prompts(int d_embed);

}  // namespace memeclip
