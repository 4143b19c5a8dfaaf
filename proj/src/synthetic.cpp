#include "memeclip/synthetic.hpp"

#include <cstdio>

#include "memeclip/error.hpp"
#include "memeclip/random.hpp"

namespace memeclip {

EmbeddingBundle make_separable_bundle(const SeparableSpec& spec) {
  if (spec.d_embed < 2) fail(ErrorCode::configuration, "separable bundle needs d_embed >= 2");
  EmbeddingBundle bundle;
  bundle.d_embed = spec.d_embed;
  bundle.tasks = {canonical_schema("hate")};

  CounterRng rng(spec.seed, 0x5EB);
  const auto d = static_cast<std::size_t>(spec.d_embed);
  const auto add = [&](Split split, int count) {
    for (int i = 0; i < count; ++i) {
      const int label = i % 2;
      EmbeddingRecord r;
      char id[32];
      std::snprintf(id, sizeof id, "%s-%04d", std::string(to_string(split)).c_str(), i);
      r.id = id;
      r.split = split;
      r.labels = {label};
      r.image_embedding.resize(d);
      r.text_embedding.resize(d);
      for (std::size_t j = 0; j < d; ++j) {
        const double indicator = j == static_cast<std::size_t>(label) ? 1.0 : 0.0;
        r.image_embedding[j] = static_cast<float>(indicator + spec.noise * rng.normal());
        r.text_embedding[j] = static_cast<float>(indicator + spec.noise * rng.normal());
      }
      bundle.records.push_back(std::move(r));
    }
  };
  add(Split::train, spec.n_train);
  add(Split::val, spec.n_val);
  add(Split::test, spec.n_test);
  return bundle;
}

ClassPromptSet make_separable_prompts(int d_embed) {
  ClassPromptSet prompts;
  prompts.task = "hate";
  prompts.class_names = canonical_schema("hate").class_names;
  prompts.embeddings.assign(2, std::vector<float>(static_cast<std::size_t>(d_embed), 0.0f));
  prompts.embeddings[0][0] = 1.0f;
  prompts.embeddings[1][1] = 1.0f;
  return prompts;
}

}  // namespace memeclip
