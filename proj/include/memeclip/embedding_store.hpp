#pragma once

// Embedding bundles: precomputed image/text embeddings per meme, split tags
// and per-task labels, plus the class-prompt embeddings used to seed the
// cosine classifier.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace memeclip {

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

std::string_view to_string(Split split) noexcept;
Split parse_split(std::string_view name);

/// On-disk and in-memory marker for an absent task label.
inline constexpr int kMissingLabel = -1;

struct TaskSchema {
  std::string name;
  int num_classes = 0;
  std::vector<std::string> class_names;

  bool operator==(const TaskSchema&) const = default;
};

/// One of the four PrideMM schemas: hate, target, stance, humor.
TaskSchema canonical_schema(std::string_view task);
std::vector<TaskSchema> canonical_schemas();

struct EmbeddingRecord {
  std::string id;
  Split split = Split::train;
  std::vector<float> image_embedding;
  std::vector<float> text_embedding;
  std::vector<int> labels;  // one per bundle task, kMissingLabel when absent

  bool operator==(const EmbeddingRecord&) const = default;
};

struct EmbeddingBundle {
  int schema_version = 1;
  int d_embed = 0;
  std::vector<TaskSchema> tasks;
  std::vector<EmbeddingRecord> records;

  /// Index of `task` in `tasks`; throws lookup error when absent.
  std::size_t task_index(std::string_view task) const;
  const TaskSchema& schema(std::string_view task) const { return tasks[task_index(task)]; }

  bool operator==(const EmbeddingBundle&) const = default;
};

/// Throws a validation error naming the first offending record.
void validate(const EmbeddingBundle& bundle);

void write_bundle(const EmbeddingBundle& bundle, const std::filesystem::path& path);
EmbeddingBundle read_bundle(const std::filesystem::path& path);

/// Records of one split that carry a label for `task`, sorted by id.
/// Embeddings are widened to double here.
struct TaskView {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> image;
  std::vector<std::vector<double>> text;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
};

TaskView task_view(const EmbeddingBundle& bundle, std::string_view task, Split split);

struct ClassPromptSet {
  std::string task;
  std::string prompt_template = "A photo of {LABEL}";
  std::vector<std::string> class_names;
  std::vector<std::vector<float>> embeddings;  // one row per class

  int d_embed() const noexcept {
    return embeddings.empty() ? 0 : static_cast<int>(embeddings.front().size());
  }

  bool operator==(const ClassPromptSet&) const = default;
};

void validate(const ClassPromptSet& prompts);
void write_class_prompts(const ClassPromptSet& prompts, const std::filesystem::path& path);
ClassPromptSet read_class_prompts(const std::filesystem::path& path);

}  // namespace memeclip
