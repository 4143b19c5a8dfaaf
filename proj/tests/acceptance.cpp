// One PASS / FAIL / SKIP line per acceptance criterion; exit status 1 if any
// criterion fails. Dataset-backed criteria are skipped unless their bundle
// paths are supplied through the environment.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "memeclip/embedding_store.hpp"
#include "memeclip/error.hpp"
#include "memeclip/harness.hpp"
#include "memeclip/head.hpp"
#include "memeclip/metrics.hpp"
#include "memeclip/random.hpp"
#include "memeclip/synthetic.hpp"
#include "memeclip/trainer.hpp"
#include "oracles.hpp"

using namespace memeclip;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

Outcome pass(std::string d) { return {Verdict::pass, std::move(d)}; }
Outcome fail_with(std::string d) { return {Verdict::fail, std::move(d)}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const GradcheckOptions options;  // d_embed {3,8}, d_proj {4,16}, n {2,4}, 50 seeds, h 1e-5
  const auto results = run_gradcheck(options);
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  std::size_t failed = 0;
  for (const auto& r : results) {
    if (!r.passed) ++failed;
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = r.config_name + " / " + r.worst_tensor;
    }
  }
  const std::string detail = fmt("%zu configs x %d seeds x 8 shapes, max rel err %.2e (%s), %.1f s", results.size(),
                                 options.seeds, worst, worst_name.c_str(), elapsed);
  if (results.size() < 8) return fail_with("only " + std::to_string(results.size()) + " configs; " + detail);
  if (failed > 0 || worst >= 1e-4) return fail_with(std::to_string(failed) + " configs failed; " + detail);
  if (elapsed >= 60.0) return fail_with("too slow; " + detail);
  return pass(detail);
}

// ---------------------------------------------------------------------------

struct MetricInstance {
  int n_classes;
  std::vector<int> labels;
  std::vector<int> preds;
  std::vector<std::vector<double>> rows;
};

MetricInstance random_metric_instance(CounterRng& rng) {
  MetricInstance in;
  in.n_classes = 2 + static_cast<int>(rng.below(4));  // 2..5
  const auto n = 2 + rng.below(49);                   // 2..50
  const bool coarse = rng.below(2) == 0;              // coarse scores force ties
  for (std::size_t i = 0; i < n; ++i) {
    in.labels.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(in.n_classes))));
    in.preds.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(in.n_classes))));
    std::vector<double> row;
    for (int c = 0; c < in.n_classes; ++c) {
      row.push_back(coarse ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform());
    }
    in.rows.push_back(std::move(row));
  }
  return in;
}

Outcome metric_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  CounterRng rng(20240601);
  int auroc_checked = 0, undefined_agreed = 0;
  double worst = 0.0;
  // Draw until 1000 instances had a defined AUROC; undefined ones must raise.
  for (int t = 0; auroc_checked < 1000; ++t) {
    const auto in = random_metric_instance(rng);
    std::vector<double> flat;
    for (const auto& r : in.rows) flat.insert(flat.end(), r.begin(), r.end());
    const double expected = oracle::macro_auroc(in.rows, in.labels, in.n_classes);
    if (expected < 0.0) {
      try {
        macro_auroc(flat, in.labels, in.n_classes);
        return fail_with("instance " + std::to_string(t) + ": oracle undefined but library returned a value");
      } catch (const Error& e) {
        if (e.code() != ErrorCode::undefined_metric) return fail_with(std::string("unexpected error: ") + e.what());
        ++undefined_agreed;
      }
      continue;
    }
    const double got = macro_auroc(flat, in.labels, in.n_classes);
    worst = std::max(worst, std::abs(got - expected));
    ++auroc_checked;
  }
  int f1_checked = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto in = random_metric_instance(rng);
    const auto per_class = oracle::per_class_f1(in.preds, in.labels, in.n_classes);
    const auto got = macro_f1(in.preds, in.labels, in.n_classes);
    const double macro = std::accumulate(per_class.begin(), per_class.end(), 0.0) / in.n_classes;
    if (got.per_class != per_class || got.macro != macro) {
      return fail_with("macro F1 differs from confusion-matrix oracle on instance " + std::to_string(t));
    }
    ++f1_checked;
  }
  const double elapsed = seconds_since(t0);
  const std::string detail = fmt("AUROC %d instances (+%d undefined agreed) max |diff| %.1e; F1 %d exact; %.2f s",
                                 auroc_checked, undefined_agreed, worst, f1_checked, elapsed);
  if (worst > 1e-12) return fail_with(detail);
  if (elapsed >= 30.0) return fail_with("too slow; " + detail);
  return pass(detail);
}

// ---------------------------------------------------------------------------

ClassPromptSet random_prompts(CounterRng& rng, int n, int d) {
  ClassPromptSet p;
  p.task = "hate";
  for (int i = 0; i < n; ++i) {
    p.class_names.push_back("class " + std::to_string(i));
    std::vector<float> row(static_cast<std::size_t>(d));
    for (auto& x : row) x = static_cast<float>(rng.normal());
    p.embeddings.push_back(row);
  }
  return p;
}

Vector random_vector(CounterRng& rng, std::size_t n) {
  Vector v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Each property returns an empty string when it holds.
std::string cosine_scale_invariance() {
  CounterRng rng(1);
  for (int t = 0; t < 500; ++t) {
    const auto d = 1 + rng.below(16);
    const auto n = 1 + rng.below(5);
    DenseMatrix w(n, d);
    for (auto& x : w.data()) x = rng.normal();
    const Vector f = random_vector(rng, d);
    const Vector z = cosine_logits(f, w, 30.0);
    for (double c : {0.5, 2.0}) {
      Vector g = f;
      for (auto& x : g) x *= c;
      if (cosine_logits(g, w, 30.0) != z) return fmt("c=%g breaks invariance", c);
    }
    // c = 10: scaling is itself exact on small-integer vectors.
    Vector fi(d);
    for (auto& x : fi) x = static_cast<double>(static_cast<int>(rng.below(41)) - 20);
    DenseMatrix wi(n, d);
    for (auto& x : wi.data()) x = static_cast<double>(static_cast<int>(rng.below(41)) - 20);
    Vector gi = fi;
    for (auto& x : gi) x *= 10.0;
    if (cosine_logits(gi, wi, 30.0) != cosine_logits(fi, wi, 30.0)) return "c=10 breaks invariance";
  }
  return {};
}

std::string alpha_zero_independence() {
  CounterRng rng(2);
  HeadConfig cfg;
  cfg.d_embed = 8;
  cfg.d_proj = 16;
  cfg.alpha = 0.0;
  for (int t = 0; t < 50; ++t) {
    const auto prompts = random_prompts(rng, 2, 8);
    const auto params = init_params(cfg, rng.next_u64(), &prompts);
    auto other = params;
    for (auto* ad : {&*other.adapter_image, &*other.adapter_text}) {
      for (auto* layer : {&ad->down, &ad->up}) {
        for (auto& x : layer->weight.data()) x = rng.normal() * 3.0;
        for (auto& x : layer->bias) x = rng.normal();
      }
    }
    const Vector a = random_vector(rng, 8), b = random_vector(rng, 8);
    if (forward(params, cfg, a, b).logits != forward(other, cfg, a, b).logits) return "logits depend on adapters";
  }
  return {};
}

std::string sai_rows() {
  CounterRng rng(3);
  for (int n : {2, 3, 4}) {
    HeadConfig cfg;
    cfg.d_embed = 12;
    cfg.d_proj = 16;
    cfg.n_classes = n;
    const auto prompts = random_prompts(rng, n, 12);
    const auto params = init_params(cfg, rng.next_u64(), &prompts);
    for (int x = 0; x < n; ++x) {
      const auto& e = prompts.embeddings[static_cast<std::size_t>(x)];
      const Vector expected = affine_forward(Vector(e.begin(), e.end()), params.proj_text->weight,
                                             params.proj_text->bias);
      const auto row = params.classifier_weight.row(static_cast<std::size_t>(x));
      if (Vector(row.begin(), row.end()) != expected) return fmt("row %d differs for n=%d", x, n);
    }
  }
  return {};
}

std::string fit_determinism() {
  const auto bundle = make_separable_bundle({});
  const auto prompts = make_separable_prompts(8);
  HeadConfig cfg;
  cfg.d_embed = 8;
  cfg.d_proj = 32;
  TrainConfig tc;
  tc.epochs = 5;
  tc.seed = 11;
  const auto a = fit(bundle, &prompts, cfg, tc);
  const auto b = fit(bundle, &prompts, cfg, tc);
  if (!(a.best_params == b.best_params) || !(a.final_params == b.final_params) || !(a.history == b.history)) {
    return "two identical fits differ";
  }
  return {};
}

std::string round_trips(const std::filesystem::path& dir) {
  CounterRng rng(4);
  const auto bundle = make_separable_bundle({});
  write_bundle(bundle, dir / "b.meb");
  if (!(read_bundle(dir / "b.meb") == bundle)) return "bundle round-trip differs";

  const auto prompts = make_separable_prompts(8);
  write_class_prompts(prompts, dir / "p.mcp");
  if (!(read_class_prompts(dir / "p.mcp") == prompts)) return "prompt round-trip differs";

  HeadConfig cfg;
  cfg.d_embed = 8;
  cfg.d_proj = 16;
  TrainConfig tc;
  tc.epochs = 2;
  const auto fitted = fit(bundle, &prompts, cfg, tc);
  const Checkpoint ck{fitted.best_params, cfg, tc, fitted.history};
  save_checkpoint(ck, dir / "c.mck");
  const auto back = load_checkpoint(dir / "c.mck");
  if (!(back.params == ck.params) || !(back.head_config == cfg) || !(back.train_config == tc) ||
      !(back.history == ck.history)) {
    return "checkpoint round-trip differs";
  }
  return {};
}

Outcome property_suite(const std::filesystem::path& dir) {
  const std::vector<std::pair<const char*, std::function<std::string()>>> props{
      {"cosine scale invariance", cosine_scale_invariance},
      {"alpha=0 adapter independence", alpha_zero_independence},
      {"sai rows", sai_rows},
      {"fit determinism", fit_determinism},
      {"round-trips", [&] { return round_trips(dir); }},
  };
  std::string held;
  for (const auto& [name, check] : props) {
    const std::string why = check();
    if (!why.empty()) return fail_with(std::string(name) + ": " + why);
    held += held.empty() ? name : std::string(", ") + name;
  }
  return pass(held);
}

// ---------------------------------------------------------------------------

Outcome synthetic_end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  const SeparableSpec spec;  // 200 / 40 / 40, d_embed 8, two classes
  const auto bundle = make_separable_bundle(spec);
  const auto prompts = make_separable_prompts(spec.d_embed);
  HeadConfig cfg;  // default toggles and widths
  cfg.d_embed = spec.d_embed;
  TrainConfig tc;  // default optimizer settings
  tc.epochs = 200;
  const auto fitted = fit(bundle, &prompts, cfg, tc);
  const auto train = evaluate(fitted.best_params, cfg, bundle, "hate", Split::train);
  const auto test = evaluate(fitted.best_params, cfg, bundle, "hate", Split::test);
  const auto final_train = evaluate(fitted.final_params, cfg, bundle, "hate", Split::train);
  const double elapsed = seconds_since(t0);
  const std::string detail =
      fmt("selected epoch %zu: train acc %.4f, test acc %.4f (last epoch train acc %.4f); %.1f s",
          *fitted.history.best_epoch, train.accuracy, test.accuracy, final_train.accuracy, elapsed);
  if (train.accuracy < 0.99 || test.accuracy < 0.95) return fail_with(detail);
  if (elapsed >= 120.0) return fail_with("too slow; " + detail);
  return pass(detail);
}

// ---------------------------------------------------------------------------

struct ReferenceRow {
  double accuracy, auroc, f1;  // percentages
};

MetricsSummary train_seeds(const EmbeddingBundle& bundle, const ClassPromptSet* prompts, HeadConfig cfg,
                           const std::string& task) {
  cfg.d_embed = bundle.d_embed;
  cfg.n_classes = bundle.schema(task).num_classes;
  std::vector<MetricsReport> reports;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    TrainConfig tc;  // lr 1e-4, batch 16, 10 epochs
    tc.seed = seed;
    tc.task = task;
    const auto fitted = fit(bundle, prompts, cfg, tc);
    reports.push_back(evaluate(fitted.best_params, cfg, bundle, task, Split::test));
  }
  return aggregate(reports);
}

std::optional<Outcome> dataset_reproduction(const char* name, const char* bundle_var, const char* prompts_var,
                                            ReferenceRow target, bool check_baseline_gap) {
  const char* bundle_path = std::getenv(bundle_var);
  const char* prompts_path = std::getenv(prompts_var);
  if (!bundle_path || !prompts_path) return std::nullopt;
  const auto bundle = read_bundle(bundle_path);
  const auto prompts = read_class_prompts(prompts_path);
  const auto full = train_seeds(bundle, &prompts, HeadConfig{}, "hate");
  const double acc = 100 * full.accuracy.mean, auc = 100 * full.macro_auroc.mean, f1 = 100 * full.macro_f1.mean;
  std::string detail = fmt("%s test Acc %.2f / AUROC %.2f / F1 %.2f vs %.2f / %.2f / %.2f", name, acc, auc, f1,
                           target.accuracy, target.auroc, target.f1);
  bool ok = std::abs(acc - target.accuracy) <= 2.5 && std::abs(auc - target.auroc) <= 2.5 &&
            std::abs(f1 - target.f1) <= 2.5;
  if (check_baseline_gap) {
    const auto clip = train_seeds(bundle, nullptr, ablation_ladder(HeadConfig{}).front().config, "hate");
    const double clip_auc = 100 * clip.macro_auroc.mean;
    detail += fmt("; CLIP-row AUROC %.2f (gap %.2f)", clip_auc, auc - clip_auc);
    ok = ok && auc - clip_auc >= 2.0;
  }
  return Outcome{ok ? Verdict::pass : Verdict::fail, detail};
}

Outcome pridemm() {
  const auto pride = dataset_reproduction("PrideMM", "MEMECLIP_PRIDEMM_BUNDLE", "MEMECLIP_PRIDEMM_PROMPTS",
                                          {76.06, 84.52, 75.09}, true);
  const auto harmeme = dataset_reproduction("HarMeme", "MEMECLIP_HARMEME_BUNDLE", "MEMECLIP_HARMEME_PROMPTS",
                                            {84.72, 92.07, 83.74}, false);
  if (!pride && !harmeme) {
    return {Verdict::skip,
            "no exported embeddings (set MEMECLIP_PRIDEMM_BUNDLE/_PROMPTS and/or MEMECLIP_HARMEME_BUNDLE/_PROMPTS)"};
  }
  std::string detail;
  bool ok = true;
  for (const auto& o : {pride, harmeme}) {
    if (!o) continue;
    ok = ok && o->verdict == Verdict::pass;
    detail += (detail.empty() ? "" : "; ") + o->detail;
  }
  if (!pride) detail += "; PrideMM not supplied";
  if (!harmeme) detail += "; HarMeme not supplied";
  return {ok ? Verdict::pass : Verdict::fail, detail};
}

// ---------------------------------------------------------------------------

// Shape-by-shape sum written out independently of count_params.
std::int64_t default_shape_sum(std::int64_t n) {
  const std::int64_t e = 768, p = 1024, r = p / 4;
  const std::vector<std::pair<std::int64_t, std::int64_t>> shapes{
      {p, e}, {p, 1},  // image projection
      {p, e}, {p, 1},  // text projection
      {r, p}, {r, 1}, {p, r}, {p, 1},  // image adapter
      {r, p}, {r, 1}, {p, r}, {p, 1},  // text adapter
      {p, p}, {p, 1},  // pre-output
      {n, p},          // cosine classifier, no bias
  };
  std::int64_t total = 0;
  for (const auto& [rows, cols] : shapes) total += rows * cols;
  return total;
}

Outcome parameter_accounting() {
  std::string detail;
  for (int n = 2; n <= 6; ++n) {
    HeadConfig cfg;
    cfg.n_classes = n;
    const std::int64_t formula = 3'677'696 + static_cast<std::int64_t>(n - 2) * 1024;
    const std::int64_t counted = count_params(cfg);
    const std::int64_t shapes = default_shape_sum(n);
    const auto allocated = static_cast<std::int64_t>(zero_params(cfg).scalar_count());
    if (counted != formula || shapes != formula || allocated != formula) {
      return fail_with(fmt("n=%d: count_params %lld, shape sum %lld, allocated %lld, expected %lld", n,
                           static_cast<long long>(counted), static_cast<long long>(shapes),
                           static_cast<long long>(allocated), static_cast<long long>(formula)));
    }
    if (n == 2 || n == 4) detail += fmt("%sn=%d: %lld", detail.empty() ? "" : ", ", n, static_cast<long long>(counted));
  }
  return pass(detail);
}

}  // namespace

int main() {
  const auto scratch = std::filesystem::temp_directory_path() / "memeclip-acceptance";
  std::filesystem::create_directories(scratch);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient-check suite", gradient_check},
      {"metric oracles", metric_oracles},
      {"property suite", [&] { return property_suite(scratch); }},
      {"synthetic end-to-end", synthetic_end_to_end},
      {"PrideMM/HarMeme reproduction", pridemm},
      {"parameter accounting", parameter_accounting},
  };

  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = fail_with(std::string("exception: ") + e.what());
    }
    const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
    failures += o.verdict == Verdict::fail;
    std::printf("%s  %s: %s\n", tag, name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::filesystem::remove_all(scratch);
  return failures == 0 ? 0 : 1;
}
