#include "memeclip/embedding_store.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "memeclip/container.hpp"
#include "memeclip/error.hpp"

namespace memeclip {

namespace {

constexpr std::string_view kBundleMagic = "MEB1";
constexpr std::string_view kPromptMagic = "MCP1";
constexpr int kFormatVersion = 1;

bool all_finite(const std::vector<float>& v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

void validate_schema(const TaskSchema& schema) {
  if (schema.name.empty()) fail(ErrorCode::validation, "task with empty name");
  if (schema.num_classes <= 0 || static_cast<std::size_t>(schema.num_classes) != schema.class_names.size()) {
    fail(ErrorCode::validation, "task '" + schema.name + "': num_classes does not match class_names");
  }
  std::unordered_set<std::string> seen;
  for (const auto& c : schema.class_names) {
    if (c.empty()) fail(ErrorCode::validation, "task '" + schema.name + "': empty class name");
    if (!seen.insert(c).second) fail(ErrorCode::validation, "task '" + schema.name + "': duplicate class '" + c + "'");
  }
}

template <typename T>
T header_field(const nlohmann::json& header, const char* key) {
  try {
    return header.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::format, std::string("header field '") + key + "' missing or mistyped");
  }
}

void check_version(const nlohmann::json& header) {
  const int version = header_field<int>(header, "version");
  if (version != kFormatVersion) fail(ErrorCode::format, "unsupported version " + std::to_string(version));
}

}  // namespace

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  fail(ErrorCode::lookup, "unknown split '" + std::string(name) + "'");
}

TaskSchema canonical_schema(std::string_view task) {
  if (task == "hate") return {"hate", 2, {"No Hate", "Hate"}};
  if (task == "target") return {"target", 4, {"Undirected", "Individual", "Community", "Organization"}};
  if (task == "stance") return {"stance", 3, {"Neutral", "Support", "Oppose"}};
  if (task == "humor") return {"humor", 2, {"No Humor", "Humor"}};
  fail(ErrorCode::lookup, "unknown task '" + std::string(task) + "'");
}

std::vector<TaskSchema> canonical_schemas() {
  return {canonical_schema("hate"), canonical_schema("target"), canonical_schema("stance"),
          canonical_schema("humor")};
}

std::size_t EmbeddingBundle::task_index(std::string_view task) const {
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].name == task) return i;
  }
  fail(ErrorCode::lookup, "unknown task '" + std::string(task) + "'");
}

void validate(const EmbeddingBundle& bundle) {
  if (bundle.d_embed <= 0) fail(ErrorCode::validation, "d_embed must be positive");
  std::unordered_set<std::string> task_names;
  for (const auto& t : bundle.tasks) {
    validate_schema(t);
    if (!task_names.insert(t.name).second) fail(ErrorCode::validation, "duplicate task '" + t.name + "'");
  }

  std::optional<std::size_t> hate_idx;
  std::optional<std::size_t> target_idx;
  for (std::size_t i = 0; i < bundle.tasks.size(); ++i) {
    if (bundle.tasks[i].name == "hate") hate_idx = i;
    if (bundle.tasks[i].name == "target") target_idx = i;
  }

  const auto d = static_cast<std::size_t>(bundle.d_embed);
  std::unordered_set<std::string> ids;
  for (const auto& r : bundle.records) {
    const auto bad = [&r](const std::string& why) { fail(ErrorCode::validation, "record '" + r.id + "': " + why); };
    if (!ids.insert(r.id).second) bad("duplicate id");
    if (static_cast<std::uint8_t>(r.split) > 2) bad("invalid split tag");
    if (r.image_embedding.size() != d || r.text_embedding.size() != d) bad("embedding length differs from d_embed");
    if (!all_finite(r.image_embedding) || !all_finite(r.text_embedding)) bad("non-finite embedding value");
    if (r.labels.size() != bundle.tasks.size()) bad("label count differs from task count");
    for (std::size_t t = 0; t < bundle.tasks.size(); ++t) {
      const int label = r.labels[t];
      if (label != kMissingLabel && (label < 0 || label >= bundle.tasks[t].num_classes)) {
        bad("label " + std::to_string(label) + " out of range for task '" + bundle.tasks[t].name + "'");
      }
    }
    // Target is a sub-class of Hate.
    if (hate_idx && target_idx && r.labels[*target_idx] != kMissingLabel && r.labels[*hate_idx] != 1) {
      bad("target label present but hate label is not 1");
    }
  }
}

void write_bundle(const EmbeddingBundle& bundle, const std::filesystem::path& path) {
  validate(bundle);
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : bundle.tasks) {
    tasks.push_back({{"name", t.name}, {"num_classes", t.num_classes}, {"class_names", t.class_names}});
  }
  const nlohmann::json header = {{"version", kFormatVersion},
                                 {"d_embed", bundle.d_embed},
                                 {"tasks", tasks},
                                 {"num_records", bundle.records.size()}};

  container::Writer w(kBundleMagic, header);
  for (const auto& r : bundle.records) {
    w.put_u32(static_cast<std::uint32_t>(r.id.size()));
    w.put_bytes(r.id);
    w.put_u8(static_cast<std::uint8_t>(r.split));
    for (int label : r.labels) w.put_i16(static_cast<std::int16_t>(label));
    for (float x : r.image_embedding) w.put_f32(x);
    for (float x : r.text_embedding) w.put_f32(x);
  }
  w.finish(path);
}

EmbeddingBundle read_bundle(const std::filesystem::path& path) {
  container::Reader in(path, kBundleMagic);
  const auto& header = in.header();
  check_version(header);

  EmbeddingBundle bundle;
  bundle.schema_version = kFormatVersion;
  bundle.d_embed = header_field<int>(header, "d_embed");
  if (bundle.d_embed <= 0) fail(ErrorCode::format, "d_embed must be positive");
  for (const auto& t : header_field<nlohmann::json>(header, "tasks")) {
    bundle.tasks.push_back({header_field<std::string>(t, "name"), header_field<int>(t, "num_classes"),
                            header_field<std::vector<std::string>>(t, "class_names")});
  }
  const auto num_records = header_field<std::size_t>(header, "num_records");
  const auto d = static_cast<std::size_t>(bundle.d_embed);
  // Each record needs at least its fixed-size part; reject absurd counts early.
  const std::size_t min_record = 4 + 1 + 2 * bundle.tasks.size() + 8 * d;
  if (num_records > in.remaining() / min_record) fail(ErrorCode::corruption, "record count exceeds payload");

  bundle.records.reserve(num_records);
  for (std::size_t i = 0; i < num_records; ++i) {
    EmbeddingRecord r;
    r.id = in.get_bytes(in.get_u32());
    const std::uint8_t split = in.get_u8();
    if (split > 2) fail(ErrorCode::format, "record '" + r.id + "': invalid split tag " + std::to_string(split));
    r.split = static_cast<Split>(split);
    r.labels.resize(bundle.tasks.size());
    for (auto& label : r.labels) label = in.get_i16();
    r.image_embedding.resize(d);
    for (auto& x : r.image_embedding) x = in.get_f32();
    r.text_embedding.resize(d);
    for (auto& x : r.text_embedding) x = in.get_f32();
    bundle.records.push_back(std::move(r));
  }
  in.expect_end();
  validate(bundle);
  return bundle;
}

TaskView task_view(const EmbeddingBundle& bundle, std::string_view task, Split split) {
  const std::size_t t = bundle.task_index(task);
  std::vector<const EmbeddingRecord*> picked;
  for (const auto& r : bundle.records) {
    if (r.split == split && r.labels[t] != kMissingLabel) picked.push_back(&r);
  }
  std::sort(picked.begin(), picked.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

  TaskView view;
  view.ids.reserve(picked.size());
  view.image.reserve(picked.size());
  view.text.reserve(picked.size());
  view.labels.reserve(picked.size());
  for (const auto* r : picked) {
    view.ids.push_back(r->id);
    view.image.emplace_back(r->image_embedding.begin(), r->image_embedding.end());
    view.text.emplace_back(r->text_embedding.begin(), r->text_embedding.end());
    view.labels.push_back(r->labels[t]);
  }
  return view;
}

void validate(const ClassPromptSet& prompts) {
  if (prompts.embeddings.empty()) fail(ErrorCode::validation, "prompt set for '" + prompts.task + "' has no rows");
  if (prompts.embeddings.size() != prompts.class_names.size()) {
    fail(ErrorCode::validation, "prompt set for '" + prompts.task + "': row count differs from class count");
  }
  const auto d = prompts.embeddings.front().size();
  if (d == 0) fail(ErrorCode::validation, "prompt set has zero-width rows");
  for (std::size_t i = 0; i < prompts.embeddings.size(); ++i) {
    if (prompts.embeddings[i].size() != d) fail(ErrorCode::validation, "prompt rows have unequal width");
    if (!all_finite(prompts.embeddings[i])) {
      fail(ErrorCode::validation, "prompt row " + std::to_string(i) + " has a non-finite value");
    }
  }
}

void write_class_prompts(const ClassPromptSet& prompts, const std::filesystem::path& path) {
  validate(prompts);
  const nlohmann::json header = {{"version", kFormatVersion},
                                 {"task", prompts.task},
                                 {"prompt_template", prompts.prompt_template},
                                 {"d_embed", prompts.d_embed()},
                                 {"class_names", prompts.class_names}};
  container::Writer w(kPromptMagic, header);
  for (const auto& row : prompts.embeddings) {
    for (float x : row) w.put_f32(x);
  }
  w.finish(path);
}

ClassPromptSet read_class_prompts(const std::filesystem::path& path) {
  container::Reader in(path, kPromptMagic);
  const auto& header = in.header();
  check_version(header);

  ClassPromptSet prompts;
  prompts.task = header_field<std::string>(header, "task");
  prompts.prompt_template = header_field<std::string>(header, "prompt_template");
  prompts.class_names = header_field<std::vector<std::string>>(header, "class_names");
  const int d = header_field<int>(header, "d_embed");
  if (d <= 0) fail(ErrorCode::format, "d_embed must be positive");
  if (prompts.class_names.size() * static_cast<std::size_t>(d) * 4 != in.remaining()) {
    fail(ErrorCode::corruption, "prompt payload size does not match header");
  }
  prompts.embeddings.assign(prompts.class_names.size(), std::vector<float>(static_cast<std::size_t>(d)));
  for (auto& row : prompts.embeddings) {
    for (auto& x : row) x = in.get_f32();
  }
  validate(prompts);
  return prompts;
}

}  // namespace memeclip
