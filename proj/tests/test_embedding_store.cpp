#include <doctest.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "memeclip/container.hpp"
#include "memeclip/embedding_store.hpp"
#include "memeclip/error.hpp"
#include "memeclip/random.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace memeclip;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t le_u32(const std::string& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[at + static_cast<std::size_t>(i)]);
  return v;
}

EmbeddingBundle four_task_bundle(int d) {
  EmbeddingBundle b;
  b.d_embed = d;
  b.tasks = canonical_schemas();
  return b;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no memeclip::Error thrown");
  return ErrorCode::validation;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

EmbeddingBundle random_bundle(CounterRng& rng) {
  auto b = four_task_bundle(1 + static_cast<int>(rng.below(6)));
  const auto n = rng.below(30);
  for (std::size_t i = 0; i < n; ++i) {
    EmbeddingRecord r;
    r.id = "m" + std::to_string(rng.below(1'000'000)) + "_" + std::to_string(i);
    r.split = static_cast<Split>(rng.below(3));
    for (int k = 0; k < b.d_embed; ++k) {
      r.image_embedding.push_back(static_cast<float>(rng.normal()));
      r.text_embedding.push_back(static_cast<float>(rng.normal()));
    }
    const int hate = static_cast<int>(rng.below(3)) - 1;
    const int target = hate == 1 && rng.below(2) ? static_cast<int>(rng.below(4)) : kMissingLabel;
    r.labels = {hate, target, static_cast<int>(rng.below(4)) - 1, static_cast<int>(rng.below(3)) - 1};
    b.records.push_back(std::move(r));
  }
  return b;
}

}  // namespace

TEST_CASE("canonical schemas") {
  const auto s = canonical_schemas();
  REQUIRE(s.size() == 4);
  CHECK(s[0].num_classes == 2);
  CHECK(s[1].num_classes == 4);
  CHECK(s[2].num_classes == 3);
  CHECK(s[3].num_classes == 2);
  CHECK(s[2].class_names == std::vector<std::string>{"Neutral", "Support", "Oppose"});
  CHECK(code_of([] { canonical_schema("sarcasm"); }) == ErrorCode::lookup);
}

TEST_CASE("empty bundle round-trips") {
  TempDir tmp;
  const auto b = four_task_bundle(3);
  write_bundle(b, tmp / "empty.meb");
  CHECK(read_bundle(tmp / "empty.meb") == b);
}

TEST_CASE("one-record bundle round-trips with the documented byte layout") {
  TempDir tmp;
  auto b = four_task_bundle(4);
  b.records.push_back({"meme_0001", Split::test, {0.5f, -1.0f, 2.0f, 0.0f}, {1.0f, 1.0f, 1.0f, 1.0f},
                       {1, kMissingLabel, 2, 0}});
  write_bundle(b, tmp / "one.meb");
  CHECK(read_bundle(tmp / "one.meb") == b);

  const std::string bytes = slurp(tmp / "one.meb");
  REQUIRE(bytes.size() > 12);
  CHECK(bytes.substr(0, 4) == "MEB1");
  const auto header_len = le_u32(bytes, 4);
  const auto header = nlohmann::json::parse(bytes.substr(8, header_len));
  CHECK(header.at("d_embed") == 4);
  CHECK(header.at("num_records") == 1);
  CHECK(header.at("tasks").size() == 4);

  // Payload: u32 id length, id, u8 split, i16 labels, f32 image, f32 text.
  std::size_t at = 8 + header_len;
  CHECK(le_u32(bytes, at) == 9);
  CHECK(bytes.substr(at + 4, 9) == "meme_0001");
  at += 13;
  CHECK(static_cast<unsigned char>(bytes[at]) == 2);
  at += 1;
  const std::int16_t expected_labels[] = {1, -1, 2, 0};
  for (auto l : expected_labels) {
    std::int16_t got;
    std::memcpy(&got, bytes.data() + at, 2);
    CHECK(got == l);
    at += 2;
  }
  float first_image;
  std::memcpy(&first_image, bytes.data() + at, 4);
  CHECK(first_image == 0.5f);
  at += 4 * 8;
  REQUIRE(at + 4 == bytes.size());
  CHECK(le_u32(bytes, at) == oracle::crc32(std::string_view(bytes).substr(0, at)));
}

TEST_CASE("container crc matches the bitwise reference") {
  CounterRng rng(5);
  for (int t = 0; t < 100; ++t) {
    std::string s(rng.below(300), '\0');
    for (auto& c : s) c = static_cast<char>(rng.below(256));
    const auto* p = reinterpret_cast<const std::byte*>(s.data());
    CHECK(container::crc32({p, s.size()}) == oracle::crc32(s));
  }
  CHECK(oracle::crc32("123456789") == 0xCBF43926u);
}

TEST_CASE("validation rejects inconsistent bundles") {
  TempDir tmp;
  auto b = four_task_bundle(2);
  b.records.push_back({"orphan-target", Split::train, {0, 0}, {0, 0}, {0, 1, kMissingLabel, kMissingLabel}});
  CHECK(code_of([&] { validate(b); }) == ErrorCode::validation);
  CHECK(message_of([&] { validate(b); }).find("orphan-target") != std::string::npos);
  CHECK(code_of([&] { write_bundle(b, tmp / "x.meb"); }) == ErrorCode::validation);
  CHECK_FALSE(std::filesystem::exists(tmp / "x.meb"));

  b.records[0].labels = {0, kMissingLabel, 3, kMissingLabel};
  CHECK(code_of([&] { validate(b); }) == ErrorCode::validation);
  b.records[0].labels = {0, kMissingLabel, 0, kMissingLabel};
  validate(b);
  b.records[0].image_embedding = {0, 0, 0};
  CHECK(code_of([&] { validate(b); }) == ErrorCode::validation);
  b.records[0].image_embedding = {0, std::numeric_limits<float>::infinity()};
  CHECK(code_of([&] { validate(b); }) == ErrorCode::validation);
  b.records[0].image_embedding = {0, 0};
  b.records.push_back(b.records[0]);
  CHECK(message_of([&] { validate(b); }).find("duplicate id") != std::string::npos);
}

TEST_CASE("corrupted and foreign files are rejected") {
  TempDir tmp;
  auto b = four_task_bundle(2);
  b.records.push_back({"a", Split::train, {1, 2}, {3, 4}, {0, kMissingLabel, 1, 1}});
  write_bundle(b, tmp / "ok.meb");
  const std::string good = slurp(tmp / "ok.meb");

  std::string flipped = good;
  flipped[flipped.size() - 10] ^= 0x01;
  spit(tmp / "flipped.meb", flipped);
  CHECK(code_of([&] { read_bundle(tmp / "flipped.meb"); }) == ErrorCode::corruption);

  std::string foreign = good;
  foreign.replace(0, 4, "XXXX");
  spit(tmp / "foreign.meb", foreign);
  CHECK(code_of([&] { read_bundle(tmp / "foreign.meb"); }) == ErrorCode::format);

  spit(tmp / "short.meb", good.substr(0, 6));
  CHECK(code_of([&] { read_bundle(tmp / "short.meb"); }) == ErrorCode::corruption);

  CHECK(code_of([&] { read_bundle(tmp / "missing.meb"); }) == ErrorCode::io);

  // A valid container whose payload holds a NaN embedding.
  const nlohmann::json header = {{"version", 1},
                                 {"d_embed", 1},
                                 {"num_records", 1},
                                 {"tasks", {{{"name", "hate"}, {"num_classes", 2}, {"class_names", {"No", "Yes"}}}}}};
  container::Writer w("MEB1", header);
  w.put_u32(1);
  w.put_bytes("n");
  w.put_u8(0);
  w.put_i16(1);
  w.put_f32(std::numeric_limits<float>::quiet_NaN());
  w.put_f32(0.0f);
  w.finish(tmp / "nan.meb");
  CHECK(code_of([&] { read_bundle(tmp / "nan.meb"); }) == ErrorCode::validation);

  // The model prompt file is not a bundle.
  ClassPromptSet p{"hate", "A photo of {LABEL}", {"No Hate", "Hate"}, {{1, 0}, {0, 1}}};
  write_class_prompts(p, tmp / "p.mcp");
  CHECK(code_of([&] { read_bundle(tmp / "p.mcp"); }) == ErrorCode::format);
}

TEST_CASE("task views filter by split and label presence") {
  auto b = four_task_bundle(2);
  for (int i = 9; i >= 0; --i) {
    const int humor = i < 3 ? kMissingLabel : i % 2;
    b.records.push_back({"r" + std::to_string(i), static_cast<Split>(i % 3), {float(i), 0}, {0, float(i)},
                         {i % 2, kMissingLabel, 0, humor}});
  }
  std::size_t humor_total = 0;
  std::size_t hate_total = 0;
  std::vector<std::string> all_ids;
  for (Split s : {Split::train, Split::val, Split::test}) {
    const auto hv = task_view(b, "humor", s);
    humor_total += hv.size();
    const auto v = task_view(b, "hate", s);
    hate_total += v.size();
    CHECK(std::is_sorted(v.ids.begin(), v.ids.end()));
    for (std::size_t k = 0; k < v.size(); ++k) {
      const int i = std::stoi(v.ids[k].substr(1));
      CHECK(static_cast<Split>(i % 3) == s);
      CHECK(v.image[k][0] == i);
      CHECK(v.text[k][1] == i);
      CHECK(v.labels[k] == i % 2);
    }
    all_ids.insert(all_ids.end(), v.ids.begin(), v.ids.end());
  }
  CHECK(humor_total == 7);
  CHECK(hate_total == 10);
  std::sort(all_ids.begin(), all_ids.end());
  CHECK(std::adjacent_find(all_ids.begin(), all_ids.end()) == all_ids.end());
  CHECK(task_view(b, "target", Split::train).empty());
  CHECK(code_of([&] { task_view(b, "sarcasm", Split::train); }) == ErrorCode::lookup);
  CHECK(code_of([] { parse_split("dev"); }) == ErrorCode::lookup);
}

TEST_CASE("class prompts round-trip") {
  TempDir tmp;
  ClassPromptSet p{"stance", "A photo of {LABEL}", {"Neutral", "Support", "Oppose"},
                   {{0.25f, -1.0f}, {3.0f, 0.0f}, {-0.5f, 0.125f}}};
  write_class_prompts(p, tmp / "s.mcp");
  CHECK(read_class_prompts(tmp / "s.mcp") == p);
  CHECK(slurp(tmp / "s.mcp").substr(0, 4) == "MCP1");

  ClassPromptSet ragged = p;
  ragged.embeddings[1] = {1.0f};
  CHECK(code_of([&] { write_class_prompts(ragged, tmp / "r.mcp"); }) == ErrorCode::validation);
  CHECK(code_of([&] { read_class_prompts(tmp / "none.mcp"); }) == ErrorCode::io);
}

TEST_CASE("random bundles round-trip exactly") {
  TempDir tmp;
  CounterRng rng(2024);
  for (int t = 0; t < 50; ++t) {
    const auto b = random_bundle(rng);
    write_bundle(b, tmp / "r.meb");
    REQUIRE(read_bundle(tmp / "r.meb") == b);
  }
}
