#include <doctest.h>

#include <fstream>
#include <iterator>
#include <map>

#include "memeclip/error.hpp"
#include "memeclip/harness.hpp"
#include "memeclip/random.hpp"
#include "memeclip/synthetic.hpp"
#include "temp_dir.hpp"

using namespace memeclip;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no memeclip::Error thrown");
  return ErrorCode::validation;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json read_json(const std::filesystem::path& p) { return nlohmann::json::parse(slurp(p)); }

// Synthetic bundle and prompts on disk plus a fast experiment config.
struct SynthFixture {
  TempDir tmp;
  ExperimentConfig config;

  explicit SynthFixture(int epochs = 20) {
    write_bundle(make_separable_bundle({}), tmp / "synth.meb");
    write_class_prompts(make_separable_prompts(8), tmp / "synth.mcp");
    config.bundle_path = tmp / "synth.meb";
    config.prompts_path = tmp / "synth.mcp";
    config.head.d_proj = 16;
    config.train.epochs = epochs;
    config.train.learning_rate = 1e-3;
    config.output_dir = tmp / "out";
  }
};

EmbeddingBundle labelled_bundle(std::size_t n_pos, std::size_t n_neg, std::size_t n_missing) {
  EmbeddingBundle b;
  b.d_embed = 1;
  b.tasks = {canonical_schema("hate")};
  std::size_t i = 0;
  const auto add = [&](int label) {
    b.records.push_back({"id" + std::to_string(1000 + i++), Split::train, {0.f}, {0.f}, {label}});
  };
  for (std::size_t k = 0; k < n_pos; ++k) add(1);
  for (std::size_t k = 0; k < n_neg; ++k) add(0);
  for (std::size_t k = 0; k < n_missing; ++k) add(kMissingLabel);
  return b;
}

std::map<std::pair<int, Split>, std::size_t> tally(const EmbeddingBundle& b) {
  std::map<std::pair<int, Split>, std::size_t> counts;
  for (const auto& r : b.records) ++counts[{r.labels[0], r.split}];
  return counts;
}

}  // namespace

TEST_CASE("ablation ladder has the five variants in order") {
  const auto ladder = ablation_ladder(HeadConfig{});
  REQUIRE(ladder.size() == 5);
  const std::vector<std::string> names{"CLIP", "+PL", "+FA", "+CC", "+SAI"};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(ladder[i].name == names[i]);
    CHECK_NOTHROW(ladder[i].config.validate());
  }
  CHECK(ladder[0].config.fusion_kind == FusionKind::concat);
  CHECK(ladder[0].config.classifier_kind == ClassifierKind::linear);
  CHECK_FALSE(ladder[0].config.use_projection);
  CHECK(ladder[1].config.use_projection);
  CHECK(ladder[1].config.fusion_kind == FusionKind::multiply);
  CHECK_FALSE(ladder[1].config.use_adapters);
  CHECK(ladder[2].config.use_adapters);
  CHECK(ladder[3].config.classifier_kind == ClassifierKind::cosine);
  CHECK(ladder[3].config.init_kind == InitKind::random);
  CHECK(ladder[4].config == HeadConfig{});
}

TEST_CASE("reachable configs are distinct and valid") {
  const auto configs = reachable_configs(HeadConfig{});
  CHECK(configs.size() == 14);
  for (std::size_t i = 0; i < configs.size(); ++i) {
    CHECK_NOTHROW(configs[i].validate());
    for (std::size_t j = 0; j < i; ++j) CHECK_FALSE(configs[i] == configs[j]);
  }
}

TEST_CASE("gradient check passes at the smallest bottleneck") {
  GradcheckOptions opt;
  opt.d_embed = {3};
  opt.d_proj = {4};
  opt.n_classes = {2, 3};
  opt.seeds = 10;
  const auto results = run_gradcheck(opt);
  CHECK(results.size() == 14);
  for (const auto& r : results) {
    CAPTURE(r.config_name);
    CHECK(r.passed);
    CHECK(r.max_rel_error < opt.tolerance);
  }
}

TEST_CASE("gradient check flags an injected sign error and names the config") {
  GradcheckOptions opt;
  opt.d_embed = {3};
  opt.d_proj = {4};
  opt.n_classes = {2};
  opt.seeds = 3;
  opt.flip_classifier_sign = true;
  const auto results = run_gradcheck(opt);
  for (const auto& r : results) {
    CHECK_FALSE(r.passed);
    CHECK(r.worst_tensor.find("classifier") != std::string::npos);
    CHECK(r.config_name == describe_toggles(r.config));
    CHECK(r.config_name.find("classifier=") != std::string::npos);
  }
}

TEST_CASE("gradient relative error") {
  CHECK(gradient_rel_error(1.0, 1.0) == 0.0);
  CHECK(gradient_rel_error(1.0, -1.0) == 2.0);
  CHECK(gradient_rel_error(0.0, 1e-10) == doctest::Approx(1e-6));
}

TEST_CASE("stratified splits follow the ratios within each stratum") {
  const auto b = labelled_bundle(500, 400, 100);
  const auto s = assign_splits(b, {0.85, 0.05, 0.10}, 3);
  const auto counts = tally(s);
  const std::map<int, std::size_t> sizes{{1, 500}, {0, 400}, {kMissingLabel, 100}};
  for (const auto& [label, n] : sizes) {
    CAPTURE(label);
    const double fn = static_cast<double>(n);
    CHECK(std::abs(static_cast<double>(counts.at({label, Split::train})) - 0.85 * fn) <= 1.0);
    CHECK(std::abs(static_cast<double>(counts.at({label, Split::val})) - 0.05 * fn) <= 1.0);
    CHECK(std::abs(static_cast<double>(counts.at({label, Split::test})) - 0.10 * fn) <= 1.0);
  }
  std::size_t train = 0, val = 0, test = 0;
  for (const auto& [key, c] : counts) {
    (key.second == Split::train ? train : key.second == Split::val ? val : test) += c;
  }
  CHECK(train == 850);
  CHECK(val == 50);
  CHECK(test == 100);

  CHECK(assign_splits(b, {0.85, 0.05, 0.10}, 3) == s);
  CHECK_FALSE(assign_splits(b, {0.85, 0.05, 0.10}, 4) == s);

  // Only split tags change.
  for (std::size_t i = 0; i < b.records.size(); ++i) {
    CHECK(s.records[i].id == b.records[i].id);
    CHECK(s.records[i].labels == b.records[i].labels);
  }
}

TEST_CASE("split edge cases") {
  const auto b = labelled_bundle(20, 20, 0);
  const auto all_train = assign_splits(b, {1.0, 0.0, 0.0}, 0);
  for (const auto& r : all_train.records) CHECK(r.split == Split::train);
  CHECK(code_of([&] { assign_splits(b, {0.5, 0.3, 0.3}, 0); }) == ErrorCode::configuration);
  CHECK(code_of([&] { assign_splits(b, {1.2, -0.1, -0.1}, 0); }) == ErrorCode::configuration);
  CHECK(code_of([&] { assign_splits(labelled_bundle(0, 0, 0), {0.8, 0.1, 0.1}, 0); }) == ErrorCode::data);
  CHECK(code_of([&] { assign_splits(labelled_bundle(1, 1, 0), {0.8, 0.1, 0.1}, 0); }) == ErrorCode::data);
}

TEST_CASE("aggregate uses the population standard deviation") {
  MetricsReport a, b;
  a.accuracy = 0.8;
  b.accuracy = 0.6;
  a.macro_auroc = b.macro_auroc = 0.9;
  const auto s = aggregate({a, b});
  CHECK(s.accuracy.mean == doctest::Approx(0.7));
  CHECK(s.accuracy.std == doctest::Approx(0.1));
  CHECK(s.macro_auroc.std == 0.0);
  CHECK(aggregate({a}).accuracy.std == 0.0);
}

TEST_CASE("run_train writes per-seed artefacts and a consistent aggregate") {
  SynthFixture fx(5);
  fx.config.seeds = {0};
  auto single = run_train(fx.config);
  CHECK(single["test"]["accuracy"]["std"] == 0.0);
  CHECK(std::filesystem::exists(fx.config.output_dir / "seed_0" / "checkpoint.mck"));

  fx.config.seeds = {0, 1, 2};
  fx.config.output_dir = fx.tmp / "three";
  const auto agg = run_train(fx.config);
  CHECK(read_json(fx.config.output_dir / "aggregate.json") == agg);
  for (const char* metric : {"accuracy", "macro_auroc", "macro_f1"}) {
    for (const char* split : {"val", "test"}) {
      double sum = 0.0;
      for (int s = 0; s < 3; ++s) {
        const auto report = read_json(fx.config.output_dir / ("seed_" + std::to_string(s)) / "report.json");
        sum += report[split][metric].get<double>();
      }
      CHECK(agg[split][metric]["mean"].get<double>() == doctest::Approx(sum / 3).epsilon(1e-12));
    }
  }
  // Checkpoint of seed 1 evaluates to the reported test numbers.
  const auto ck = load_checkpoint(fx.config.output_dir / "seed_1" / "checkpoint.mck");
  const auto report = read_json(fx.config.output_dir / "seed_1" / "report.json");
  const auto test = evaluate(ck.params, ck.head_config, read_bundle(fx.config.bundle_path), "hate", Split::test);
  CHECK(report["test"]["accuracy"].get<double>() == test.accuracy);
  CHECK(report["test"]["macro_auroc"].get<double>() == test.macro_auroc);
}

TEST_CASE("missing prompts fail before anything is written") {
  SynthFixture fx(1);
  fx.config.prompts_path.reset();
  CHECK(code_of([&] { run_train(fx.config); }) == ErrorCode::configuration);
  CHECK(code_of([&] { run_ablate(fx.config); }) == ErrorCode::configuration);
  CHECK_FALSE(std::filesystem::exists(fx.config.output_dir));

  fx.config.seeds = {1, 1};
  fx.config.prompts_path = fx.tmp / "synth.mcp";
  CHECK(code_of([&] { run_train(fx.config); }) == ErrorCode::configuration);
  CHECK_FALSE(std::filesystem::exists(fx.config.output_dir));

  fx.config.seeds = {0};
  fx.config.task = "humor";  // not in the synthetic bundle
  CHECK(code_of([&] { run_train(fx.config); }) == ErrorCode::lookup);
}

TEST_CASE("ablation on separable data: every variant learns, reruns are byte-identical") {
  SynthFixture fx(30);
  // Selection keeps the earliest epoch at saturated val AUROC, so the step
  // size must make that epoch accurate too.
  fx.config.train.learning_rate = 1e-2;
  fx.config.seeds = {0, 1};
  const auto rows = run_ablate(fx.config);
  REQUIRE(rows.size() == 5);
  for (const auto& r : rows) {
    CAPTURE(r.variant_name);
    CHECK(r.per_seed.size() == 2);
    CHECK(r.summary.accuracy.mean >= 0.99);
  }
  const auto json = read_json(fx.config.output_dir / "ablation.json");
  CHECK(json["split"] == "test");
  CHECK(json["rows"].size() == 5);
  const std::string csv = slurp(fx.config.output_dir / "ablation.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);

  const auto first_json = slurp(fx.config.output_dir / "ablation.json");
  fx.config.output_dir = fx.tmp / "again";
  run_ablate(fx.config);
  CHECK(slurp(fx.config.output_dir / "ablation.json") == first_json);
  CHECK(slurp(fx.config.output_dir / "ablation.csv") == csv);
}
