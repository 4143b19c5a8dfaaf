// memeclip: train / eval / ablate / gradcheck / split / synth
//
// Exit status: 0 success, 1 validation or configuration error, 2 I/O,
// format or corruption error.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "memeclip/embedding_store.hpp"
#include "memeclip/error.hpp"
#include "memeclip/harness.hpp"
#include "memeclip/serialization.hpp"
#include "memeclip/synthetic.hpp"
#include "memeclip/trainer.hpp"

namespace {

using namespace memeclip;

int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::io:
    case ErrorCode::format:
    case ErrorCode::corruption:
      return 2;
    default:
      return 1;
  }
}

struct HeadFlags {
  bool no_projection = false;
  bool no_adapters = false;
  std::string classifier = "cosine";
  std::string init = "sai";
  std::string fusion = "multiply";
};

void add_head_flags(CLI::App* cmd, HeadConfig& head, HeadFlags& flags) {
  cmd->add_option("--d-proj", head.d_proj, "Projection width")->capture_default_str();
  cmd->add_option("--reduction", head.adapter_reduction, "Adapter bottleneck reduction")->capture_default_str();
  cmd->add_option("--alpha", head.alpha, "Adapter residual ratio")->capture_default_str();
  cmd->add_option("--sigma", head.sigma, "Cosine classifier scale")->capture_default_str();
  cmd->add_flag("--no-projection", flags.no_projection, "Disable projection layers");
  cmd->add_flag("--no-adapters", flags.no_adapters, "Disable feature adapters");
  cmd->add_option("--classifier", flags.classifier, "cosine | linear")->capture_default_str();
  cmd->add_option("--init", flags.init, "sai | random")->capture_default_str();
  cmd->add_option("--fusion", flags.fusion, "multiply | concat")->capture_default_str();
}

void apply_head_flags(HeadConfig& head, const HeadFlags& flags) {
  head.use_projection = !flags.no_projection;
  head.use_adapters = !flags.no_adapters && !flags.no_projection;
  head.classifier_kind = parse_classifier_kind(flags.classifier);
  head.init_kind = parse_init_kind(flags.init);
  head.fusion_kind = parse_fusion_kind(flags.fusion);
}

void add_train_flags(CLI::App* cmd, TrainConfig& train) {
  cmd->add_option("--lr", train.learning_rate, "Learning rate")->capture_default_str();
  cmd->add_option("--batch-size", train.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--epochs", train.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--beta1", train.beta1)->capture_default_str();
  cmd->add_option("--beta2", train.beta2)->capture_default_str();
  cmd->add_option("--adam-eps", train.adam_eps)->capture_default_str();
}

void add_experiment_flags(CLI::App* cmd, ExperimentConfig& cfg, HeadFlags& flags) {
  cmd->add_option("--bundle", cfg.bundle_path, "MEB1 embedding bundle")->required();
  cmd->add_option("--prompts", cfg.prompts_path, "MCP1 class-prompt file");
  cmd->add_option("--task", cfg.task, "Task name")->capture_default_str();
  cmd->add_option("--seeds", cfg.seeds, "Seeds")->capture_default_str();
  cmd->add_option("--out", cfg.output_dir, "Output directory")->capture_default_str();
  add_head_flags(cmd, cfg.head, flags);
  add_train_flags(cmd, cfg.train);
}

std::string pct(const MetricStats& m) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%6.2f +- %.2f", 100.0 * m.mean, 100.0 * m.std);
  return buf;
}

void print_summary(const std::string& label, const MetricsSummary& s) {
  std::cout << label << "  acc " << pct(s.accuracy) << "  auroc " << pct(s.macro_auroc) << "  f1 "
            << pct(s.macro_f1) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MemeCLIP head: training, evaluation and ablations on precomputed embeddings"};
  app.set_config("--config", "", "Key-value config file; options of a command go under [command]");
  app.require_subcommand(1);

  ExperimentConfig train_cfg;
  HeadFlags train_flags;
  auto* train = app.add_subcommand("train", "Train the head for each seed and aggregate");
  add_experiment_flags(train, train_cfg, train_flags);

  ExperimentConfig ablate_cfg;
  HeadFlags ablate_flags;
  auto* ablate = app.add_subcommand("ablate", "Run the CLIP -> +PL -> +FA -> +CC -> +SAI ladder");
  add_experiment_flags(ablate, ablate_cfg, ablate_flags);

  std::filesystem::path eval_checkpoint, eval_bundle, eval_out;
  std::string eval_task, eval_split = "test";
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  eval->add_option("--checkpoint", eval_checkpoint, "MCK1 checkpoint")->required();
  eval->add_option("--bundle", eval_bundle, "MEB1 embedding bundle")->required();
  eval->add_option("--task", eval_task, "Task (defaults to the checkpoint's)");
  eval->add_option("--split", eval_split, "train | val | test")->capture_default_str();
  eval->add_option("--out", eval_out, "Report JSON path");

  GradcheckOptions gc;
  std::filesystem::path gc_out;
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare backward with central differences");
  gradcheck->add_option("--d-embed", gc.d_embed)->capture_default_str();
  gradcheck->add_option("--d-proj", gc.d_proj)->capture_default_str();
  gradcheck->add_option("--n-classes", gc.n_classes)->capture_default_str();
  gradcheck->add_option("--reduction", gc.adapter_reduction)->capture_default_str();
  gradcheck->add_option("--seeds", gc.seeds, "Seeds per configuration")->capture_default_str();
  gradcheck->add_option("--batch", gc.batch)->capture_default_str();
  gradcheck->add_option("--step", gc.h, "Finite-difference step")->capture_default_str();
  gradcheck->add_option("--tolerance", gc.tolerance)->capture_default_str();
  gradcheck->add_flag("--inject-fault", gc.flip_classifier_sign, "Flip the classifier gradient sign (self-test)");
  gradcheck->add_option("--out", gc_out, "Report JSON path");

  std::filesystem::path split_in, split_out;
  std::vector<double> ratios{0.85, 0.05, 0.10};
  std::uint64_t split_seed = 0;
  auto* split = app.add_subcommand("split", "Assign stratified train/val/test tags");
  split->add_option("--bundle", split_in, "Input bundle")->required();
  split->add_option("--out", split_out, "Output bundle")->required();
  split->add_option("--ratios", ratios, "train val test")->expected(3)->capture_default_str();
  split->add_option("--seed", split_seed)->capture_default_str();

  SeparableSpec synth_spec;
  std::filesystem::path synth_out, synth_prompts;
  auto* synth = app.add_subcommand("synth", "Write the separable synthetic bundle and prompts");
  synth->add_option("--out", synth_out, "Bundle path")->required();
  synth->add_option("--prompts-out", synth_prompts, "Prompt file path");
  synth->add_option("--d-embed", synth_spec.d_embed)->capture_default_str();
  synth->add_option("--n-train", synth_spec.n_train)->capture_default_str();
  synth->add_option("--n-val", synth_spec.n_val)->capture_default_str();
  synth->add_option("--n-test", synth_spec.n_test)->capture_default_str();
  synth->add_option("--noise", synth_spec.noise)->capture_default_str();
  synth->add_option("--seed", synth_spec.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) {
      apply_head_flags(train_cfg.head, train_flags);
      const auto agg = run_train(train_cfg);
      std::cout << "wrote " << (train_cfg.output_dir / "aggregate.json").string() << "\n";
      const auto stat = [&](const char* split, const char* metric) {
        return MetricStats{agg[split][metric]["mean"].get<double>(), agg[split][metric]["std"].get<double>()};
      };
      for (const char* s : {"val", "test"}) {
        print_summary(s, {stat(s, "accuracy"), stat(s, "macro_auroc"), stat(s, "macro_f1")});
      }
    } else if (*ablate) {
      apply_head_flags(ablate_cfg.head, ablate_flags);
      for (const auto& row : run_ablate(ablate_cfg)) {
        char label[16];
        std::snprintf(label, sizeof label, "%-5s", row.variant_name.c_str());
        print_summary(label, row.summary);
      }
    } else if (*eval) {
      const Checkpoint ck = load_checkpoint(eval_checkpoint);
      const EmbeddingBundle bundle = read_bundle(eval_bundle);
      const std::string task = eval_task.empty() ? ck.train_config.task : eval_task;
      const MetricsReport report = evaluate(ck.params, ck.head_config, bundle, task, parse_split(eval_split));
      const nlohmann::json j = report;
      if (!eval_out.empty()) write_text(eval_out, j.dump(2) + "\n");
      std::cout << j.dump(2) << "\n";
    } else if (*gradcheck) {
      const auto results = run_gradcheck(gc);
      bool ok = true;
      nlohmann::json out = nlohmann::json::array();
      for (const auto& r : results) {
        ok = ok && r.passed;
        std::printf("%s  %-70s max_rel_err=%.3e (%s)\n", r.passed ? "PASS" : "FAIL", r.config_name.c_str(),
                    r.max_rel_error, r.worst_tensor.c_str());
        out.push_back({{"config", r.config_name},
                       {"seeds", r.seeds},
                       {"max_rel_error", r.max_rel_error},
                       {"worst_tensor", r.worst_tensor},
                       {"passed", r.passed}});
      }
      if (!gc_out.empty()) write_text(gc_out, out.dump(2) + "\n");
      return ok ? 0 : 1;
    } else if (*split) {
      EmbeddingBundle bundle = read_bundle(split_in);
      bundle = assign_splits(bundle, {ratios[0], ratios[1], ratios[2]}, split_seed);
      write_bundle(bundle, split_out);
      std::size_t counts[3] = {0, 0, 0};
      for (const auto& r : bundle.records) ++counts[static_cast<int>(r.split)];
      std::cout << "train " << counts[0] << "  val " << counts[1] << "  test " << counts[2] << "\n";
    } else if (*synth) {
      write_bundle(make_separable_bundle(synth_spec), synth_out);
      if (!synth_prompts.empty()) write_class_prompts(make_separable_prompts(synth_spec.d_embed), synth_prompts);
    }
  } catch (const Error& e) {
    std::cerr << "memeclip: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_status(e.code());
  } catch (const std::exception& e) {
    std::cerr << "memeclip: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
