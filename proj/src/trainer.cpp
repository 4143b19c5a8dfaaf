#include "memeclip/trainer.hpp"

#include <cmath>
#include <string>

#include "memeclip/container.hpp"
#include "clones.hpp"
#include "memeclip/error.hpp"
#include "memeclip/random.hpp"
#include "memeclip/serialization.hpp"

namespace memeclip {

namespace {

constexpr std::string_view kCheckpointMagic = "MCK1";
constexpr int kCheckpointVersion = 1;
constexpr std::uint64_t kShuffleStream = 0x5348'0000'0000ull;

void check_same_shape(const HeadParams& a, const HeadParams& b, const char* what) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  bool same = ta.size() == tb.size();
  for (std::size_t i = 0; same && i < ta.size(); ++i) same = ta[i].size() == tb[i].size();
  if (!same) fail(ErrorCode::dimension, std::string(what) + " is not shaped like the parameters");
}

// Bias corrections enter as reciprocals: one divide and one sqrt per scalar.
MEMECLIP_HOT void adam_kernel(double* __restrict theta, const double* __restrict g, double* __restrict m,
                              double* __restrict v, std::size_t n, const TrainConfig& config, double inv_correction1,
                              double inv_correction2) {
  const double b1 = config.beta1, b2 = config.beta2, lr = config.learning_rate, eps = config.adam_eps;
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = g[i];
    m[i] = b1 * m[i] + (1.0 - b1) * gi;
    v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
    const double m_hat = m[i] * inv_correction1;
    const double v_hat = v[i] * inv_correction2;
    theta[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

// Samples per forward_batch call during evaluation.
constexpr std::size_t kEvalChunk = 64;

std::string where(std::size_t epoch, std::size_t batch) {
  return "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch);
}

}  // namespace

void TrainConfig::validate() const {
  const auto bad = [](const std::string& why) { fail(ErrorCode::configuration, why); };
  if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
  if (batch_size <= 0) bad("batch_size must be positive");
  if (epochs < 0) bad("epochs must be non-negative");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) bad("Adam betas must lie in (0, 1)");
  if (!(adam_eps > 0.0)) bad("adam_eps must be positive");
}

AdamState AdamState::zeros_like(const HeadParams& params) {
  return {0, memeclip::zeros_like(params), memeclip::zeros_like(params)};
}

void adam_step(HeadParams& params, const HeadParams& grads, AdamState& state, const TrainConfig& config) {
  check_same_shape(params, grads, "gradient record");
  check_same_shape(params, state.first_moment, "first moment");
  check_same_shape(params, state.second_moment, "second moment");

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);

  auto theta = params.tensors();
  const auto g = grads.tensors();
  auto m = state.first_moment.tensors();
  auto v = state.second_moment.tensors();
  for (std::size_t k = 0; k < theta.size(); ++k) {
    adam_kernel(theta[k].data(), g[k].data(), m[k].data(), v[k].data(), theta[k].size(), config,
                1.0 / correction1, 1.0 / correction2);
  }
}

MetricsReport evaluate_view(const HeadParams& params, const HeadConfig& config, const TaskView& view,
                            const std::string& task, Split split) {
  if (view.empty()) {
    fail(ErrorCode::data, "empty " + std::string(to_string(split)) + " view for task '" + task + "'");
  }
  const auto n = static_cast<std::size_t>(config.n_classes);
  std::vector<double> scores;
  scores.reserve(view.size() * n);
  std::vector<int> predictions;
  predictions.reserve(view.size());
  for (std::size_t start = 0; start < view.size(); start += kEvalChunk) {
    const std::size_t stop = std::min(view.size(), start + kEvalChunk);
    const Batch images(view.image.begin() + static_cast<std::ptrdiff_t>(start),
                       view.image.begin() + static_cast<std::ptrdiff_t>(stop));
    const Batch texts(view.text.begin() + static_cast<std::ptrdiff_t>(start),
                      view.text.begin() + static_cast<std::ptrdiff_t>(stop));
    for (const auto& c : forward_batch(params, config, images, texts)) {
      predictions.push_back(argmax(c.logits));
      const Vector p = softmax(c.logits);
      scores.insert(scores.end(), p.begin(), p.end());
    }
  }

  MetricsReport report;
  report.task = task;
  report.split = split;
  report.n_samples = view.size();
  report.accuracy = accuracy(predictions, view.labels);
  auto f1 = macro_f1(predictions, view.labels, config.n_classes);
  report.macro_f1 = f1.macro;
  report.per_class_f1 = std::move(f1.per_class);
  report.macro_auroc = macro_auroc(scores, view.labels, config.n_classes);
  return report;
}

MetricsReport evaluate(const HeadParams& params, const HeadConfig& config, const EmbeddingBundle& bundle,
                       const std::string& task, Split split) {
  return evaluate_view(params, config, task_view(bundle, task, split), task, split);
}

FitResult fit(const EmbeddingBundle& bundle, const ClassPromptSet* prompts, const HeadConfig& head_config,
              const TrainConfig& train_config) {
  head_config.validate();
  train_config.validate();
  if (train_config.epochs == 0) fail(ErrorCode::configuration, "epochs=0 leaves no epoch to select");

  const TaskSchema& schema = bundle.schema(train_config.task);
  if (schema.num_classes != head_config.n_classes) {
    fail(ErrorCode::configuration, "task '" + schema.name + "' has " + std::to_string(schema.num_classes) +
                                       " classes but the head is configured for " +
                                       std::to_string(head_config.n_classes));
  }
  if (bundle.d_embed != head_config.d_embed) {
    fail(ErrorCode::dimension, "bundle d_embed=" + std::to_string(bundle.d_embed) + " but head expects " +
                                   std::to_string(head_config.d_embed));
  }
  if (head_config.init_kind == InitKind::sai) {
    if (prompts == nullptr) fail(ErrorCode::configuration, "semantic init requires class prompts");
    if (prompts->task != schema.name) {
      fail(ErrorCode::configuration, "class prompts are for task '" + prompts->task + "', training '" +
                                         schema.name + "'");
    }
  }

  const TaskView train = task_view(bundle, train_config.task, Split::train);
  const TaskView val = task_view(bundle, train_config.task, Split::val);
  if (train.empty()) fail(ErrorCode::data, "empty train view for task '" + schema.name + "'");
  if (val.empty()) fail(ErrorCode::data, "empty val view for task '" + schema.name + "'");

  HeadParams params = init_params(head_config, train_config.seed, prompts);
  AdamState adam = AdamState::zeros_like(params);
  HeadParams grads = zeros_like(params);

  FitResult result{params, {}, {}};
  double best_auroc = -1.0;
  const auto batch_size = static_cast<std::size_t>(train_config.batch_size);

  for (std::size_t epoch = 0; epoch < static_cast<std::size_t>(train_config.epochs); ++epoch) {
    CounterRng rng(train_config.seed, kShuffleStream + epoch);
    const auto order = rng.permutation(train.size());
    double loss_sum = 0.0;

    for (std::size_t start = 0, batch = 0; start < order.size(); start += batch_size, ++batch) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (auto t : grads.tensors()) std::fill(t.begin(), t.end(), 0.0);
      try {
        Batch images, texts;
        for (std::size_t k = start; k < stop; ++k) {
          images.emplace_back(train.image[order[k]]);
          texts.emplace_back(train.text[order[k]]);
        }
        const auto caches = forward_batch(params, head_config, images, texts);
        std::vector<Vector> dlogits;
        for (std::size_t k = start; k < stop; ++k) {
          LossAndGrad lg = softmax_ce_loss(caches[k - start].logits, train.labels[order[k]]);
          if (!std::isfinite(lg.loss)) fail(ErrorCode::numeric, "non-finite loss");
          loss_sum += lg.loss;
          for (double& d : lg.dlogits) d *= inv;
          dlogits.push_back(std::move(lg.dlogits));
        }
        backward_accumulate_batch(params, head_config, caches, dlogits, grads);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::numeric) throw;
        fail(ErrorCode::numeric, std::string(e.what()) + " at " + where(epoch, batch));
      }
      adam_step(params, grads, adam, train_config);
    }

    const MetricsReport v = evaluate_view(params, head_config, val, schema.name, Split::val);
    result.history.epochs.push_back(
        {loss_sum / static_cast<double>(train.size()), v.accuracy, v.macro_auroc, v.macro_f1});
    if (v.macro_auroc > best_auroc) {
      best_auroc = v.macro_auroc;
      result.best_params = params;
      result.history.best_epoch = epoch;
    }
  }
  result.final_params = std::move(params);
  return result;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  check_same_shape(zero_params(checkpoint.head_config), checkpoint.params, "checkpoint tensor set");
  const nlohmann::json header = {{"version", kCheckpointVersion},
                                 {"head_config", checkpoint.head_config},
                                 {"train_config", checkpoint.train_config},
                                 {"history", checkpoint.history},
                                 {"tensors", checkpoint.params.tensor_names()}};
  container::Writer w(kCheckpointMagic, header);
  for (const auto& t : checkpoint.params.tensors()) {
    for (double x : t) w.put_f64(x);
  }
  w.finish(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  container::Reader in(path, kCheckpointMagic);
  const auto& header = in.header();
  Checkpoint ck;
  try {
    if (header.at("version").get<int>() != kCheckpointVersion) fail(ErrorCode::format, "unsupported checkpoint version");
    header.at("head_config").get_to(ck.head_config);
    header.at("train_config").get_to(ck.train_config);
    header.at("history").get_to(ck.history);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("malformed checkpoint header: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::format) throw;
    fail(ErrorCode::format, std::string("malformed checkpoint header: ") + e.what());
  }
  ck.params = zero_params(ck.head_config);
  if (in.remaining() != ck.params.scalar_count() * 8) fail(ErrorCode::corruption, "checkpoint payload size mismatch");
  for (auto t : ck.params.tensors()) {
    for (double& x : t) x = in.get_f64();
  }
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const HeadConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.head_config == expected)) {
    const nlohmann::json stored = ck.head_config;
    const nlohmann::json wanted = expected;
    std::string diff;
    for (const auto& [key, value] : wanted.items()) {
      if (stored.at(key) != value) diff += " " + key + "=" + stored.at(key).dump() + " (expected " + value.dump() + ")";
    }
    fail(ErrorCode::configuration, "checkpoint config mismatch:" + diff);
  }
  return ck;
}

}  // namespace memeclip
