#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aim/sample.hpp"

namespace aim {

enum class SkillKind { kCount, kAttribute, kPresence, kCompare };

// A question type. Answers land in [label_offset, label_offset + label_count).
// Skills 0-4 use disjoint ranges that exactly tile 24 classes; skills 5-9 (only
// used for streams longer than five tasks) reuse earlier ranges with a
// different answer mapping.
struct Skill {
  int id = 0;
  std::string_view name;
  SkillKind kind = SkillKind::kCount;
  int label_offset = 0;
  int label_count = 0;
};

const std::vector<Skill>& skill_catalogue();
inline constexpr std::size_t kMaxTasks = 10;

inline constexpr int kPadToken = 0;

struct Concept {
  int id = 0;
  std::vector<double> prototype;
  int attribute = 0;
};

struct HeldoutPair {
  int skill = 0;
  int concept_id = 0;
  bool operator==(const HeldoutPair&) const = default;
};

struct SampleLayout {
  std::size_t region_count = 8;
  std::size_t feature_dim = 16;
  std::size_t question_len = 4;
  bool operator==(const SampleLayout&) const = default;
};

struct StreamSpec {
  std::size_t num_tasks = 5;
  std::size_t num_concepts = 10;
  std::size_t num_attributes = 6;
  std::size_t train_per_task = 2000;
  std::size_t standard_test_per_task = 500;
  std::size_t comp_test_per_task = 500;
  std::uint64_t seed = 0;

  // Held-out pairs: when `explicit_heldout` is set, `heldout` is used verbatim;
  // otherwise, with comp_enabled, concepts are split into 5 groups (c mod 5)
  // and the skill of task s holds out group (s + comp_fold) mod 5.
  bool comp_enabled = true;
  int comp_fold = 0;
  bool explicit_heldout = false;
  std::vector<HeldoutPair> heldout;

  // Training order as a permutation of task ids; identity when empty.
  std::vector<std::size_t> order;

  // Region jitter radius scale; regions lie strictly within 2*jitter of their
  // prototype and prototypes are at least 4*jitter apart.
  double jitter = 0.6;
  // Per-task prototype translation (domain-shift approximation); 0 disables.
  double domain_shift = 0.0;

  // Question wording: each concept has `synonyms` tokens per role, each skill
  // `phrasings` tokens, and spare slots are filled from `filler_words`.
  std::size_t synonyms = 1;
  std::size_t phrasings = 1;
  std::size_t filler_words = 0;

  SampleLayout layout;
  std::size_t vocab_size = 256;
  std::size_t answer_classes = 24;

  // Throws SpecError naming the problem (including infeasible held-out pairs).
  void validate() const;
  std::vector<HeldoutPair> heldout_pairs() const;
  std::vector<std::size_t> task_order() const;
};

// Question vocabulary: row 0 pads, then filler words, primary-concept
// synonyms and second-concept synonyms (questions are mean-pooled, so the two
// roles need separate tokens). Skill phrasings fill the top of the table:
// mask ties among unused embedding rows go to the lowest index, and rows of
// skills not yet trained should not be the first frozen.
struct TokenMap {
  std::size_t fillers = 0, synonyms = 1, phrasings = 1;
  int filler_base = 1, concept_base = 1, second_base = 1, skill_base = 1, end = 1;

  int filler(std::size_t i) const { return filler_base + static_cast<int>(i); }
  int concept_token(int c, std::size_t syn) const { return concept_base + c * static_cast<int>(synonyms) + static_cast<int>(syn); }
  int second_token(int c, std::size_t syn) const { return second_base + c * static_cast<int>(synonyms) + static_cast<int>(syn); }
  int skill_token(int skill, std::size_t p) const { return skill_base + skill * static_cast<int>(phrasings) + static_cast<int>(p); }
};

TokenMap token_map(const StreamSpec& spec);

struct TaskDataset {
  int task_id = 0;
  int skill = 0;
  std::vector<Sample> train;
  std::vector<Sample> standard_test;
  std::vector<Sample> comp_test;

  bool operator==(const TaskDataset&) const = default;
};

struct Stream {
  SampleLayout layout;
  std::vector<TaskDataset> tasks;  // training order
};

std::vector<Concept> make_concepts(const StreamSpec& spec);

// Label for a scene under (skill, concept[, concept2]) by measuring which
// regions fall within 2*jitter of each concept prototype (+ task shift).
int answer_oracle(std::span<const double> regions, const SampleLayout& layout, const Skill& skill,
                  const Concept& concept_a, const Concept* concept_b, std::span<const double> shift,
                  double jitter, std::size_t num_attributes);

// Region-center translation applied to every region of a task.
std::vector<double> task_shift(const StreamSpec& spec, int task_id);

TaskDataset build_task(const StreamSpec& spec, int task_id, const std::vector<Concept>& concepts);
Stream build_stream(const StreamSpec& spec);

// Named orders over n tasks: "default", "reverse", or "random" (seeded).
std::vector<std::size_t> named_order(std::string_view name, std::size_t n, std::uint64_t seed);
Stream reorder(const Stream& stream, std::span<const std::size_t> order);

void write_stream(const Stream& stream, std::ostream& out);
void write_stream(const Stream& stream, const std::filesystem::path& path);
Stream read_stream(std::istream& in);
Stream load_stream(const std::filesystem::path& path);

}  // namespace aim
