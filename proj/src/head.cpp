#include "memeclip/head.hpp"

#include <cmath>
#include <string>

#include "memeclip/error.hpp"
#include "memeclip/random.hpp"

namespace memeclip {

namespace {

constexpr std::uint64_t kInitStream = 0x1417;

void fill_uniform(Affine& layer, CounterRng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(layer.weight.cols()));
  for (double& w : layer.weight.data()) w = rng.uniform(-bound, bound);
}

void fill_uniform(DenseMatrix& weight, CounterRng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(weight.cols()));
  for (double& w : weight.data()) w = rng.uniform(-bound, bound);
}

Adapter zero_adapter(const HeadConfig& config) {
  const auto d = static_cast<std::size_t>(config.d_proj);
  const auto h = config.bottleneck_dim();
  return {Affine::zeros(h, d), Affine::zeros(d, h)};
}

void check_stage(std::span<const double> v, const char* stage) {
  if (!all_finite(v)) fail(ErrorCode::numeric, std::string("non-finite value after ") + stage);
}

// Spans over one member of each cache, in batch order.
template <typename Cache, typename Member>
Batch gather(const std::vector<Cache*>& caches, Member member) {
  Batch out;
  out.reserve(caches.size());
  for (const auto* c : caches) out.emplace_back(c->*member);
  return out;
}

Batch as_batch(const std::vector<Vector>& vs) { return {vs.begin(), vs.end()}; }

void forward_modality(const std::optional<Affine>& proj, const std::optional<Adapter>& adapter,
                      const HeadConfig& config, const Batch& embs, const std::vector<ModalityCache*>& cs) {
  for (std::size_t b = 0; b < cs.size(); ++b) cs[b]->input.assign(embs[b].begin(), embs[b].end());
  if (proj) {
    auto projected = affine_forward_batch(gather(cs, &ModalityCache::input), proj->weight, proj->bias);
    for (std::size_t b = 0; b < cs.size(); ++b) {
      cs[b]->projected = std::move(projected[b]);
      check_stage(cs[b]->projected, "projection");
    }
  } else {
    for (auto* c : cs) c->projected = c->input;
  }
  if (!adapter) {
    for (auto* c : cs) c->output = c->projected;
    return;
  }
  auto down = affine_forward_batch(gather(cs, &ModalityCache::projected), adapter->down.weight, adapter->down.bias);
  for (std::size_t b = 0; b < cs.size(); ++b) {
    cs[b]->down_pre = std::move(down[b]);
    cs[b]->hidden = relu(cs[b]->down_pre);
  }
  auto up = affine_forward_batch(gather(cs, &ModalityCache::hidden), adapter->up.weight, adapter->up.bias);
  const double a = config.alpha;
  for (std::size_t b = 0; b < cs.size(); ++b) {
    auto& c = *cs[b];
    c.up_pre = std::move(up[b]);
    c.output.resize(c.projected.size());
    for (std::size_t i = 0; i < c.output.size(); ++i) {
      const double adapted = c.up_pre[i] > 0.0 ? c.up_pre[i] : 0.0;
      c.output[i] = a * adapted + (1.0 - a) * c.projected[i];
    }
    check_stage(c.output, "adapter");
  }
}

void backward_modality(const std::optional<Affine>& proj, const std::optional<Adapter>& adapter,
                       const HeadConfig& config, const std::vector<const ModalityCache*>& cs,
                       std::vector<Vector> d_out, std::optional<Affine>& proj_grad,
                       std::optional<Adapter>& adapter_grad) {
  std::vector<Vector> d_projected;
  if (adapter) {
    const double a = config.alpha;
    std::vector<Vector> d_up_pre;
    for (std::size_t b = 0; b < cs.size(); ++b) {
      Vector d_adapted(d_out[b].size());
      Vector d_residual(d_out[b].size());
      for (std::size_t i = 0; i < d_out[b].size(); ++i) {
        d_residual[i] = (1.0 - a) * d_out[b][i];
        d_adapted[i] = a * d_out[b][i];
      }
      d_projected.push_back(std::move(d_residual));
      d_up_pre.push_back(relu_backward(cs[b]->up_pre, d_adapted));
    }
    const auto d_hidden = affine_backward_batch(gather(cs, &ModalityCache::hidden), adapter->up.weight,
                                                as_batch(d_up_pre), adapter_grad->up.weight, adapter_grad->up.bias);
    std::vector<Vector> d_down_pre;
    for (std::size_t b = 0; b < cs.size(); ++b) d_down_pre.push_back(relu_backward(cs[b]->down_pre, d_hidden[b]));
    const auto d_through =
        affine_backward_batch(gather(cs, &ModalityCache::projected), adapter->down.weight, as_batch(d_down_pre),
                              adapter_grad->down.weight, adapter_grad->down.bias);
    for (std::size_t b = 0; b < cs.size(); ++b) {
      for (std::size_t i = 0; i < d_projected[b].size(); ++i) d_projected[b][i] += d_through[b][i];
    }
  } else {
    d_projected = std::move(d_out);
  }
  if (proj) {
    affine_backward_batch(gather(cs, &ModalityCache::input), proj->weight, as_batch(d_projected), proj_grad->weight,
                          proj_grad->bias, /*want_dx=*/false);
  }
}

template <typename Params, typename Span>
std::vector<Span> collect(Params& p) {
  std::vector<Span> out;
  const auto add_affine = [&out](auto& layer) {
    out.emplace_back(layer.weight.data());
    out.emplace_back(layer.bias);
  };
  if (p.proj_image) add_affine(*p.proj_image);
  if (p.proj_text) add_affine(*p.proj_text);
  if (p.adapter_image) {
    add_affine(p.adapter_image->down);
    add_affine(p.adapter_image->up);
  }
  if (p.adapter_text) {
    add_affine(p.adapter_text->down);
    add_affine(p.adapter_text->up);
  }
  if (p.pre_output) add_affine(*p.pre_output);
  out.emplace_back(p.classifier_weight.data());
  if (!p.classifier_bias.empty()) out.emplace_back(p.classifier_bias);
  return out;
}

}  // namespace

std::string_view to_string(ClassifierKind kind) noexcept {
  return kind == ClassifierKind::cosine ? "cosine" : "linear";
}
std::string_view to_string(InitKind kind) noexcept { return kind == InitKind::sai ? "sai" : "random"; }
std::string_view to_string(FusionKind kind) noexcept {
  return kind == FusionKind::multiply ? "multiply" : "concat";
}

ClassifierKind parse_classifier_kind(std::string_view name) {
  if (name == "cosine") return ClassifierKind::cosine;
  if (name == "linear") return ClassifierKind::linear;
  fail(ErrorCode::configuration, "unknown classifier kind '" + std::string(name) + "'");
}

InitKind parse_init_kind(std::string_view name) {
  if (name == "sai") return InitKind::sai;
  if (name == "random") return InitKind::random;
  fail(ErrorCode::configuration, "unknown init kind '" + std::string(name) + "'");
}

FusionKind parse_fusion_kind(std::string_view name) {
  if (name == "multiply") return FusionKind::multiply;
  if (name == "concat") return FusionKind::concat;
  fail(ErrorCode::configuration, "unknown fusion kind '" + std::string(name) + "'");
}

void HeadConfig::validate() const {
  const auto bad = [](const std::string& why) { fail(ErrorCode::configuration, why); };
  if (d_embed <= 0 || d_proj <= 0 || adapter_reduction <= 0 || n_classes <= 0) {
    bad("dimensions and class count must be positive");
  }
  if (d_proj % adapter_reduction != 0) bad("d_proj must be divisible by adapter_reduction");
  if (!(alpha >= 0.0 && alpha <= 1.0)) bad("alpha must lie in [0, 1]");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) bad("sigma must be positive");
  if (!(eps > 0.0)) bad("eps must be positive");
  if (use_adapters && !use_projection) bad("adapters require projection layers");
  if (init_kind == InitKind::sai) {
    if (classifier_kind != ClassifierKind::cosine) bad("semantic init requires the cosine classifier");
    if (!use_projection) bad("semantic init requires projection layers");
    if (fusion_kind != FusionKind::multiply) bad("semantic init requires multiplicative fusion");
  }
}

std::vector<std::span<double>> HeadParams::tensors() { return collect<HeadParams, std::span<double>>(*this); }

std::vector<std::span<const double>> HeadParams::tensors() const {
  return collect<const HeadParams, std::span<const double>>(*this);
}

std::vector<std::string> HeadParams::tensor_names() const {
  std::vector<std::string> names;
  const auto add = [&names](const std::string& prefix) {
    names.push_back(prefix + ".weight");
    names.push_back(prefix + ".bias");
  };
  if (proj_image) add("proj_image");
  if (proj_text) add("proj_text");
  if (adapter_image) {
    add("adapter_image.down");
    add("adapter_image.up");
  }
  if (adapter_text) {
    add("adapter_text.down");
    add("adapter_text.up");
  }
  if (pre_output) add("pre_output");
  names.emplace_back("classifier.weight");
  if (!classifier_bias.empty()) names.emplace_back("classifier.bias");
  return names;
}

std::size_t HeadParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.size();
  return n;
}

Vector HeadParams::flatten() const {
  Vector flat;
  flat.reserve(scalar_count());
  for (const auto& t : tensors()) flat.insert(flat.end(), t.begin(), t.end());
  return flat;
}

void HeadParams::unflatten(std::span<const double> flat) {
  if (flat.size() != scalar_count()) fail(ErrorCode::dimension, "flat parameter vector has the wrong length");
  std::size_t offset = 0;
  for (auto t : tensors()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.begin());
    offset += t.size();
  }
}

HeadParams zero_params(const HeadConfig& config) {
  config.validate();
  HeadParams p;
  const auto d_embed = static_cast<std::size_t>(config.d_embed);
  const auto d_proj = static_cast<std::size_t>(config.d_proj);
  if (config.use_projection) {
    p.proj_image = Affine::zeros(d_proj, d_embed);
    p.proj_text = Affine::zeros(d_proj, d_embed);
  }
  if (config.use_adapters) {
    p.adapter_image = zero_adapter(config);
    p.adapter_text = zero_adapter(config);
  }
  const std::size_t fused = config.fused_dim();
  if (config.has_pre_output()) p.pre_output = Affine::zeros(fused, fused);
  p.classifier_weight = DenseMatrix(static_cast<std::size_t>(config.n_classes), fused);
  if (config.classifier_kind == ClassifierKind::linear) {
    p.classifier_bias.assign(static_cast<std::size_t>(config.n_classes), 0.0);
  }
  return p;
}

HeadParams zeros_like(const HeadParams& params) {
  HeadParams z = params;
  for (auto t : z.tensors()) std::fill(t.begin(), t.end(), 0.0);
  return z;
}

HeadParams init_params(const HeadConfig& config, std::uint64_t seed, const ClassPromptSet* prompts) {
  HeadParams p = zero_params(config);
  if (config.init_kind == InitKind::sai && prompts == nullptr) {
    fail(ErrorCode::configuration, "semantic init requires class prompts");
  }
  CounterRng rng(seed, kInitStream);
  if (p.proj_image) fill_uniform(*p.proj_image, rng);
  if (p.proj_text) fill_uniform(*p.proj_text, rng);
  for (auto* adapter : {&p.adapter_image, &p.adapter_text}) {
    if (*adapter) {
      fill_uniform((*adapter)->down, rng);
      fill_uniform((*adapter)->up, rng);
    }
  }
  if (p.pre_output) fill_uniform(*p.pre_output, rng);
  if (config.init_kind == InitKind::sai) {
    semantic_init(p, config, *prompts);
  } else {
    fill_uniform(p.classifier_weight, rng);
  }
  return p;
}

void semantic_init(HeadParams& params, const HeadConfig& config, const ClassPromptSet& prompts) {
  if (!params.proj_text) fail(ErrorCode::configuration, "semantic init requires a text projection");
  if (prompts.embeddings.size() != static_cast<std::size_t>(config.n_classes) ||
      prompts.d_embed() != config.d_embed) {
    fail(ErrorCode::dimension, "class prompts are " + std::to_string(prompts.embeddings.size()) + "x" +
                                   std::to_string(prompts.d_embed()) + ", expected " +
                                   std::to_string(config.n_classes) + "x" + std::to_string(config.d_embed));
  }
  if (params.classifier_weight.cols() != static_cast<std::size_t>(config.d_proj)) {
    fail(ErrorCode::configuration, "semantic init requires a d_proj-wide classifier");
  }
  for (std::size_t x = 0; x < prompts.embeddings.size(); ++x) {
    const Vector prompt(prompts.embeddings[x].begin(), prompts.embeddings[x].end());
    const Vector row = affine_forward(prompt, params.proj_text->weight, params.proj_text->bias);
    std::copy(row.begin(), row.end(), params.classifier_weight.row(x).begin());
  }
}

std::vector<ForwardCache> forward_batch(const HeadParams& params, const HeadConfig& config, const Batch& images,
                                        const Batch& texts) {
  const auto d_embed = static_cast<std::size_t>(config.d_embed);
  if (images.size() != texts.size()) fail(ErrorCode::dimension, "image and text batches differ in size");
  for (std::size_t b = 0; b < images.size(); ++b) {
    if (images[b].size() != d_embed || texts[b].size() != d_embed) {
      fail(ErrorCode::dimension, "embedding length differs from d_embed=" + std::to_string(d_embed));
    }
  }
  std::vector<ForwardCache> caches(images.size());
  std::vector<ModalityCache*> image_caches, text_caches;
  for (auto& c : caches) {
    c.config = config;
    image_caches.push_back(&c.image);
    text_caches.push_back(&c.text);
  }
  forward_modality(params.proj_image, params.adapter_image, config, images, image_caches);
  forward_modality(params.proj_text, params.adapter_text, config, texts, text_caches);

  for (auto& c : caches) {
    const auto& a = c.image.output;
    const auto& b = c.text.output;
    if (config.fusion_kind == FusionKind::multiply) {
      c.fused.resize(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) c.fused[i] = a[i] * b[i];
    } else {
      c.fused = a;
      c.fused.insert(c.fused.end(), b.begin(), b.end());
    }
    check_stage(c.fused, "fusion");
  }

  Batch fused;
  for (const auto& c : caches) fused.emplace_back(c.fused);
  if (config.has_pre_output()) {
    auto pre = affine_forward_batch(fused, params.pre_output->weight, params.pre_output->bias);
    for (std::size_t b = 0; b < caches.size(); ++b) {
      auto& c = caches[b];
      c.classifier_input = std::move(pre[b]);
      check_stage(c.classifier_input, "pre_output");
      c.logits = cosine_logits(c.classifier_input, params.classifier_weight, config.sigma, config.eps);
      check_stage(c.logits, "classifier");
    }
  } else {
    auto logits = affine_forward_batch(fused, params.classifier_weight, params.classifier_bias);
    for (std::size_t b = 0; b < caches.size(); ++b) {
      auto& c = caches[b];
      c.classifier_input = c.fused;
      c.logits = std::move(logits[b]);
      check_stage(c.logits, "classifier");
    }
  }
  return caches;
}

ForwardCache forward(const HeadParams& params, const HeadConfig& config, std::span<const double> image_emb,
                     std::span<const double> text_emb) {
  return std::move(forward_batch(params, config, {image_emb}, {text_emb}).front());
}

void backward_accumulate_batch(const HeadParams& params, const HeadConfig& config,
                               const std::vector<ForwardCache>& caches, const std::vector<Vector>& dlogits,
                               HeadParams& grads) {
  if (caches.size() != dlogits.size()) fail(ErrorCode::dimension, "one dlogits vector per cache is required");
  for (std::size_t b = 0; b < caches.size(); ++b) {
    if (!(caches[b].config == config)) fail(ErrorCode::state, "forward cache was produced under a different config");
    if (dlogits[b].size() != caches[b].logits.size()) {
      fail(ErrorCode::dimension, "dlogits length differs from logits");
    }
  }
  if (grads.tensors().size() != params.tensors().size() || grads.scalar_count() != params.scalar_count()) {
    fail(ErrorCode::dimension, "gradient record is not shaped like the parameters");
  }

  Batch classifier_inputs, fused;
  for (const auto& c : caches) {
    classifier_inputs.emplace_back(c.classifier_input);
    fused.emplace_back(c.fused);
  }
  std::vector<Vector> d_fused;
  if (config.has_pre_output()) {
    std::vector<Vector> d_input;
    for (std::size_t b = 0; b < caches.size(); ++b) {
      d_input.push_back(cosine_backward(caches[b].classifier_input, params.classifier_weight, config.sigma,
                                        config.eps, dlogits[b], grads.classifier_weight));
    }
    d_fused = affine_backward_batch(fused, params.pre_output->weight, as_batch(d_input), grads.pre_output->weight,
                                    grads.pre_output->bias);
  } else {
    d_fused = affine_backward_batch(classifier_inputs, params.classifier_weight, as_batch(dlogits),
                                    grads.classifier_weight, grads.classifier_bias);
  }

  std::vector<Vector> d_image, d_text;
  std::vector<const ModalityCache*> image_caches, text_caches;
  for (std::size_t s = 0; s < caches.size(); ++s) {
    const auto& a = caches[s].image.output;
    const auto& b = caches[s].text.output;
    const auto& d = d_fused[s];
    Vector di(a.size());
    Vector dt(b.size());
    if (config.fusion_kind == FusionKind::multiply) {
      for (std::size_t i = 0; i < a.size(); ++i) {
        di[i] = d[i] * b[i];
        dt[i] = d[i] * a[i];
      }
    } else {
      std::copy_n(d.begin(), a.size(), di.begin());
      std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(a.size()), b.size(), dt.begin());
    }
    d_image.push_back(std::move(di));
    d_text.push_back(std::move(dt));
    image_caches.push_back(&caches[s].image);
    text_caches.push_back(&caches[s].text);
  }

  backward_modality(params.proj_image, params.adapter_image, config, image_caches, std::move(d_image),
                    grads.proj_image, grads.adapter_image);
  backward_modality(params.proj_text, params.adapter_text, config, text_caches, std::move(d_text), grads.proj_text,
                    grads.adapter_text);
}

void backward_accumulate(const HeadParams& params, const HeadConfig& config, const ForwardCache& cache,
                         std::span<const double> dlogits, HeadParams& grads) {
  // Copies keep the single-sample entry point on the batched path.
  backward_accumulate_batch(params, config, {cache}, {Vector(dlogits.begin(), dlogits.end())}, grads);
}

HeadParams backward(const HeadParams& params, const HeadConfig& config, const ForwardCache& cache,
                    std::span<const double> dlogits) {
  HeadParams grads = zeros_like(params);
  backward_accumulate(params, config, cache, dlogits, grads);
  return grads;
}

std::int64_t count_params(const HeadConfig& config) {
  config.validate();
  const auto affine = [](std::int64_t in, std::int64_t out) { return in * out + out; };
  const std::int64_t d_embed = config.d_embed;
  const std::int64_t d_proj = config.d_proj;
  const std::int64_t bottleneck = d_proj / config.adapter_reduction;
  const auto fused = static_cast<std::int64_t>(config.fused_dim());
  const std::int64_t n = config.n_classes;

  std::int64_t total = 0;
  if (config.use_projection) total += 2 * affine(d_embed, d_proj);
  if (config.use_adapters) total += 2 * (affine(d_proj, bottleneck) + affine(bottleneck, d_proj));
  if (config.has_pre_output()) total += affine(fused, fused);
  total += n * fused;
  if (config.classifier_kind == ClassifierKind::linear) total += n;
  return total;
}

}  // namespace memeclip
