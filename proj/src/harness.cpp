#include "memeclip/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "memeclip/error.hpp"
#include "memeclip/random.hpp"
#include "memeclip/serialization.hpp"

namespace memeclip {

namespace {

constexpr std::uint64_t kGradcheckStream = 0x6C;
constexpr std::uint64_t kSplitStream = 0x5B1;
// Inputs whose relu pre-activations sit this close to the kink are redrawn;
// central differences are meaningless across the kink.
constexpr double kKinkMargin = 1e-3;

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

MetricStats stats(const std::vector<double>& values) {
  MetricStats s;
  if (values.empty()) return s;
  const auto n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / n);
  return s;
}

double min_abs(const Vector& v) {
  double m = INFINITY;
  for (double x : v) m = std::min(m, std::abs(x));
  return m;
}

double kink_distance(const ForwardCache& c) {
  double m = INFINITY;
  for (const auto* mod : {&c.image, &c.text}) {
    if (!mod->down_pre.empty()) m = std::min({m, min_abs(mod->down_pre), min_abs(mod->up_pre)});
  }
  return m;
}

nlohmann::json seed_report(std::uint64_t seed, const FitResult& fitted, const MetricsReport& val,
                           const MetricsReport& test) {
  return {{"seed", seed}, {"best_epoch", *fitted.history.best_epoch}, {"val", val}, {"test", test}};
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::io, "cannot create '" + dir.string() + "': " + ec.message());
}

}  // namespace

void ExperimentConfig::validate() const {
  if (seeds.empty()) fail(ErrorCode::configuration, "at least one seed is required");
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) fail(ErrorCode::configuration, "seeds must be distinct");
  train.validate();
  if (train.epochs == 0) fail(ErrorCode::configuration, "epochs must be positive");
}

MetricsSummary aggregate(const std::vector<MetricsReport>& reports) {
  std::vector<double> acc, auc, f1;
  for (const auto& r : reports) {
    acc.push_back(r.accuracy);
    auc.push_back(r.macro_auroc);
    f1.push_back(r.macro_f1);
  }
  return {stats(acc), stats(auc), stats(f1)};
}

nlohmann::json summary_to_json(const MetricsSummary& s) {
  const auto one = [](const MetricStats& m) { return nlohmann::json{{"mean", m.mean}, {"std", m.std}}; };
  return {{"accuracy", one(s.accuracy)}, {"macro_auroc", one(s.macro_auroc)}, {"macro_f1", one(s.macro_f1)}};
}

std::vector<AblationVariant> ablation_ladder(const HeadConfig& base) {
  HeadConfig c = base;
  c.use_projection = false;
  c.use_adapters = false;
  c.classifier_kind = ClassifierKind::linear;
  c.init_kind = InitKind::random;
  c.fusion_kind = FusionKind::concat;
  std::vector<AblationVariant> ladder{{"CLIP", c}};

  c.use_projection = true;
  c.fusion_kind = FusionKind::multiply;
  ladder.push_back({"+PL", c});
  c.use_adapters = true;
  ladder.push_back({"+FA", c});
  c.classifier_kind = ClassifierKind::cosine;
  ladder.push_back({"+CC", c});
  c.init_kind = InitKind::sai;
  ladder.push_back({"+SAI", c});
  return ladder;
}

std::vector<HeadConfig> reachable_configs(const HeadConfig& base) {
  std::vector<HeadConfig> out;
  const std::pair<ClassifierKind, InitKind> heads[] = {{ClassifierKind::linear, InitKind::random},
                                                       {ClassifierKind::cosine, InitKind::random},
                                                       {ClassifierKind::cosine, InitKind::sai}};
  for (bool proj : {false, true}) {
    for (bool adapters : {false, true}) {
      for (FusionKind fusion : {FusionKind::multiply, FusionKind::concat}) {
        for (const auto& [classifier, init] : heads) {
          HeadConfig c = base;
          c.use_projection = proj;
          c.use_adapters = adapters;
          c.fusion_kind = fusion;
          c.classifier_kind = classifier;
          c.init_kind = init;
          try {
            c.validate();
          } catch (const Error&) {
            continue;
          }
          out.push_back(c);
        }
      }
    }
  }
  return out;
}

std::string describe_toggles(const HeadConfig& c) {
  return std::string("proj=") + (c.use_projection ? "on" : "off") + " adapters=" + (c.use_adapters ? "on" : "off") +
         " fusion=" + std::string(to_string(c.fusion_kind)) + " classifier=" +
         std::string(to_string(c.classifier_kind)) + " init=" + std::string(to_string(c.init_kind));
}

double gradient_rel_error(double analytic, double numeric) noexcept {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradientErrorFloor});
  return std::abs(analytic - numeric) / scale;
}

GradcheckResult gradcheck_instance(const HeadConfig& config, std::uint64_t seed, const GradcheckOptions& options) {
  config.validate();
  CounterRng rng(seed, kGradcheckStream);
  const auto d = static_cast<std::size_t>(config.d_embed);
  const auto n = static_cast<std::size_t>(config.n_classes);

  ClassPromptSet prompts;
  prompts.task = "gradcheck";
  for (std::size_t c = 0; c < n; ++c) {
    prompts.class_names.push_back("class" + std::to_string(c));
    std::vector<float> row(d);
    for (auto& x : row) x = static_cast<float>(rng.normal());
    prompts.embeddings.push_back(std::move(row));
  }
  HeadParams params = init_params(config, seed, &prompts);
  const auto names = params.tensor_names();
  {
    auto tensors = params.tensors();
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      if (names[t].ends_with(".bias")) {
        for (double& b : tensors[t]) b = rng.uniform(-0.1, 0.1);
      }
    }
  }

  const auto batch = static_cast<std::size_t>(options.batch);
  std::vector<Vector> image(batch, Vector(d)), text(batch, Vector(d));
  std::vector<int> labels(batch);
  for (int attempt = 0;; ++attempt) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (auto& x : image[b]) x = rng.normal();
      for (auto& x : text[b]) x = rng.normal();
      labels[b] = static_cast<int>(rng.below(n));
    }
    double nearest = INFINITY;
    for (std::size_t b = 0; b < batch; ++b) nearest = std::min(nearest, kink_distance(forward(params, config, image[b], text[b])));
    if (nearest > kKinkMargin || attempt == 100) break;
  }

  HeadParams grads = zeros_like(params);
  for (std::size_t b = 0; b < batch; ++b) {
    const ForwardCache cache = forward(params, config, image[b], text[b]);
    LossAndGrad lg = softmax_ce_loss(cache.logits, labels[b]);
    for (double& g : lg.dlogits) g /= static_cast<double>(batch);
    backward_accumulate(params, config, cache, lg.dlogits, grads);
  }
  if (options.flip_classifier_sign) {
    for (double& g : grads.classifier_weight.data()) g = -g;
  }

  HeadParams probe = params;
  const auto loss_fn = [&](std::span<const double> flat) {
    probe.unflatten(flat);
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      total += softmax_ce_loss(forward(probe, config, image[b], text[b]).logits, labels[b]).loss;
    }
    return total / static_cast<double>(batch);
  };
  const Vector numeric = finite_diff_grad(loss_fn, params.flatten(), options.h);
  const Vector analytic = grads.flatten();

  GradcheckResult result;
  result.config_name = describe_toggles(config);
  result.config = config;
  result.seeds = 1;
  const auto sizes = grads.tensors();
  std::size_t offset = 0;
  for (std::size_t t = 0; t < sizes.size(); ++t) {
    for (std::size_t i = 0; i < sizes[t].size(); ++i) {
      const double e = gradient_rel_error(analytic[offset + i], numeric[offset + i]);
      if (e > result.max_rel_error || std::isnan(e)) {
        result.max_rel_error = std::isnan(e) ? INFINITY : e;
        result.worst_tensor = names[t];
      }
    }
    offset += sizes[t].size();
  }
  result.passed = result.max_rel_error < options.tolerance;
  return result;
}

std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& options) {
  struct Dims {
    int d_embed, d_proj, n;
  };
  std::vector<Dims> dims;
  for (int e : options.d_embed) {
    for (int p : options.d_proj) {
      for (int n : options.n_classes) {
        if (p % options.adapter_reduction == 0) dims.push_back({e, p, n});
      }
    }
  }
  if (dims.empty()) fail(ErrorCode::configuration, "no gradcheck dimension combination is valid");
  if (options.seeds <= 0 || options.batch <= 0) fail(ErrorCode::configuration, "seeds and batch must be positive");

  HeadConfig base;
  base.adapter_reduction = options.adapter_reduction;
  std::vector<GradcheckResult> results;
  for (const HeadConfig& toggles : reachable_configs(base)) {
    GradcheckResult agg;
    agg.config_name = describe_toggles(toggles);
    agg.config = toggles;
    for (int s = 0; s < options.seeds; ++s) {
      for (const Dims& dim : dims) {
        HeadConfig c = toggles;
        c.d_embed = dim.d_embed;
        c.d_proj = dim.d_proj;
        c.n_classes = dim.n;
        const GradcheckResult r = gradcheck_instance(c, static_cast<std::uint64_t>(s), options);
        if (r.max_rel_error > agg.max_rel_error || agg.worst_tensor.empty()) {
          agg.max_rel_error = r.max_rel_error;
          agg.worst_tensor = r.worst_tensor;
        }
      }
      ++agg.seeds;
    }
    agg.passed = agg.max_rel_error < options.tolerance;
    results.push_back(std::move(agg));
  }
  return results;
}

EmbeddingBundle assign_splits(const EmbeddingBundle& bundle, std::array<double, 3> ratios, std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) fail(ErrorCode::configuration, "split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorCode::configuration, "split ratios must sum to 1");
  if (bundle.records.empty()) fail(ErrorCode::data, "bundle has no records to split");
  const std::size_t hate = bundle.task_index("hate");

  // Strata keyed by hate label (MISSING forms its own stratum), ids sorted so
  // the result does not depend on record order.
  std::map<int, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < bundle.records.size(); ++i) strata[bundle.records[i].labels[hate]].push_back(i);

  EmbeddingBundle out = bundle;
  std::array<std::size_t, 3> totals{};
  for (auto& [label, members] : strata) {
    std::sort(members.begin(), members.end(),
              [&](std::size_t a, std::size_t b) { return bundle.records[a].id < bundle.records[b].id; });
    const std::size_t n = members.size();
    // Largest-remainder apportionment: each split within one record of ratio * n.
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      const double exact = ratios[s] * static_cast<double>(n);
      counts[s] = static_cast<std::size_t>(std::floor(exact));
      remainder[s] = exact - static_cast<double>(counts[s]);
      assigned += counts[s];
    }
    while (assigned < n) {
      std::size_t best = 0;
      for (std::size_t s = 1; s < 3; ++s) {
        if (remainder[s] > remainder[best]) best = s;
      }
      ++counts[best];
      remainder[best] = -1.0;
      ++assigned;
    }

    CounterRng rng(seed, kSplitStream + static_cast<std::uint64_t>(label + 1));
    const auto perm = rng.permutation(n);
    std::size_t k = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t c = 0; c < counts[s]; ++c, ++k) {
        out.records[members[perm[k]]].split = static_cast<Split>(s);
      }
      totals[s] += counts[s];
    }
  }
  for (std::size_t s = 0; s < 3; ++s) {
    if (ratios[s] > 0.0 && totals[s] == 0) {
      fail(ErrorCode::data, "bundle too small: no record lands in the " +
                                std::string(to_string(static_cast<Split>(s))) + " split");
    }
  }
  return out;
}

ExperimentInputs load_inputs(const ExperimentConfig& config, bool need_prompts) {
  config.validate();
  ExperimentInputs in;
  in.bundle = read_bundle(config.bundle_path);
  const TaskSchema& schema = in.bundle.schema(config.task);
  in.head = config.head;
  in.head.d_embed = in.bundle.d_embed;
  in.head.n_classes = schema.num_classes;
  in.head.validate();
  if (config.prompts_path) {
    in.prompts = read_class_prompts(*config.prompts_path);
    if (in.prompts->task != config.task) {
      fail(ErrorCode::configuration, "prompt file is for task '" + in.prompts->task + "', not '" + config.task + "'");
    }
  }
  if (need_prompts && !in.prompts) fail(ErrorCode::configuration, "semantic init requires --prompts");
  for (Split split : {Split::train, Split::val, Split::test}) {
    if (task_view(in.bundle, config.task, split).empty()) {
      fail(ErrorCode::data, "empty " + std::string(to_string(split)) + " view for task '" + config.task + "'");
    }
  }
  return in;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) fail(ErrorCode::io, "write to '" + path.string() + "' failed");
}

nlohmann::json run_train(const ExperimentConfig& config) {
  const ExperimentInputs in = load_inputs(config, config.head.init_kind == InitKind::sai);
  const ClassPromptSet* prompts = in.prompts ? &*in.prompts : nullptr;
  ensure_dir(config.output_dir);

  std::vector<MetricsReport> val_reports, test_reports;
  nlohmann::json per_seed = nlohmann::json::array();
  for (std::uint64_t seed : config.seeds) {
    TrainConfig tc = config.train;
    tc.seed = seed;
    tc.task = config.task;
    const FitResult fitted = fit(in.bundle, prompts, in.head, tc);
    const MetricsReport val = evaluate(fitted.best_params, in.head, in.bundle, config.task, Split::val);
    const MetricsReport test = evaluate(fitted.best_params, in.head, in.bundle, config.task, Split::test);

    const auto dir = config.output_dir / ("seed_" + std::to_string(seed));
    ensure_dir(dir);
    save_checkpoint({fitted.best_params, in.head, tc, fitted.history}, dir / "checkpoint.mck");
    nlohmann::json report = seed_report(seed, fitted, val, test);
    report["head_config"] = in.head;
    report["train_config"] = tc;
    report["history"] = fitted.history;
    write_text(dir / "report.json", report.dump(2) + "\n");

    val_reports.push_back(val);
    test_reports.push_back(test);
    per_seed.push_back(seed_report(seed, fitted, val, test));
  }

  const nlohmann::json agg = {{"task", config.task},
                              {"seeds", config.seeds},
                              {"head_config", in.head},
                              {"per_seed", per_seed},
                              {"val", summary_to_json(aggregate(val_reports))},
                              {"test", summary_to_json(aggregate(test_reports))}};
  write_text(config.output_dir / "aggregate.json", agg.dump(2) + "\n");
  return agg;
}

std::vector<AblationRow> run_ablate(const ExperimentConfig& config) {
  const ExperimentInputs in = load_inputs(config, /*need_prompts=*/true);
  ensure_dir(config.output_dir);

  std::vector<AblationRow> rows;
  for (const auto& variant : ablation_ladder(in.head)) {
    AblationRow row{variant.name, variant.config, {}, {}};
    for (std::uint64_t seed : config.seeds) {
      TrainConfig tc = config.train;
      tc.seed = seed;
      tc.task = config.task;
      const FitResult fitted = fit(in.bundle, &*in.prompts, variant.config, tc);
      row.per_seed.push_back(evaluate(fitted.best_params, variant.config, in.bundle, config.task, Split::test));
    }
    row.summary = aggregate(row.per_seed);
    rows.push_back(std::move(row));
  }
  write_text(config.output_dir / "ablation.json", ablation_to_json(rows).dump(2) + "\n");
  write_text(config.output_dir / "ablation.csv", ablation_to_csv(rows));
  return rows;
}

nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"variant", r.variant_name},
                   {"toggles",
                    {{"use_projection", r.config.use_projection},
                     {"use_adapters", r.config.use_adapters},
                     {"classifier_kind", to_string(r.config.classifier_kind)},
                     {"init_kind", to_string(r.config.init_kind)},
                     {"fusion_kind", to_string(r.config.fusion_kind)}}},
                   {"per_seed", r.per_seed},
                   {"summary", summary_to_json(r.summary)}});
  }
  return {{"split", "test"}, {"rows", out}};
}

std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
  std::string csv =
      "variant,use_projection,use_adapters,classifier_kind,init_kind,fusion_kind,"
      "accuracy_mean,accuracy_std,macro_auroc_mean,macro_auroc_std,macro_f1_mean,macro_f1_std\n";
  for (const auto& r : rows) {
    const auto& s = r.summary;
    csv += r.variant_name + "," + (r.config.use_projection ? "1" : "0") + "," + (r.config.use_adapters ? "1" : "0") +
           "," + std::string(to_string(r.config.classifier_kind)) + "," + std::string(to_string(r.config.init_kind)) +
           "," + std::string(to_string(r.config.fusion_kind));
    for (const MetricStats* m : {&s.accuracy, &s.macro_auroc, &s.macro_f1}) {
      csv += "," + shortest(m->mean) + "," + shortest(m->std);
    }
    csv += "\n";
  }
  return csv;
}

}  // namespace memeclip
