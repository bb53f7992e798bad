#include "aim/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "aim/error.hpp"
#include "aim/rng.hpp"

namespace aim {

namespace {

enum class Split { kTrain, kStandard, kComp };

// Mapping variants share a kind but differ in how the measured quantity becomes a label.
enum class Variant { kExact, kBucket, kParity, kLow, kPresent, kAbsent, kMore, kFewer, kColor, kColorShift };

struct SkillDef {
  Skill skill;
  Variant variant;
};

const std::vector<SkillDef>& definitions() {
  static const std::vector<SkillDef> defs = {
      {{0, "count", SkillKind::kCount, 0, 9}, Variant::kExact},
      {{1, "color", SkillKind::kAttribute, 9, 6}, Variant::kColor},
      {{2, "exists", SkillKind::kPresence, 15, 2}, Variant::kPresent},
      {{3, "more", SkillKind::kCompare, 17, 2}, Variant::kMore},
      {{4, "count_bucket", SkillKind::kCount, 19, 5}, Variant::kBucket},
      {{5, "absent", SkillKind::kPresence, 15, 2}, Variant::kAbsent},
      {{6, "fewer", SkillKind::kCompare, 17, 2}, Variant::kFewer},
      {{7, "count_parity", SkillKind::kCount, 19, 2}, Variant::kParity},
      {{8, "color_next", SkillKind::kAttribute, 9, 6}, Variant::kColorShift},
      {{9, "count_low", SkillKind::kCount, 21, 3}, Variant::kLow},
  };
  return defs;
}

Variant variant_of(const Skill& skill) { return definitions().at(static_cast<std::size_t>(skill.id)).variant; }

double distance(std::span<const double> a, std::span<const double> b, std::span<const double> shift) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i] - (shift.empty() ? 0.0 : shift[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

int count_near(std::span<const double> regions, const SampleLayout& layout, const Concept& c,
               std::span<const double> shift, double jitter) {
  int n = 0;
  for (std::size_t r = 0; r < layout.region_count; ++r) {
    auto region = regions.subspan(r * layout.feature_dim, layout.feature_dim);
    if (distance(region, c.prototype, shift) < 2.0 * jitter) ++n;
  }
  return n;
}

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kStandard:
      return "standard";
    case Split::kComp:
      return "comp";
  }
  return "?";
}

}  // namespace

const std::vector<Skill>& skill_catalogue() {
  static const std::vector<Skill> skills = [] {
    std::vector<Skill> out;
    for (const auto& d : definitions()) out.push_back(d.skill);
    return out;
  }();
  return skills;
}

void StreamSpec::validate() const {
  if (num_tasks > kMaxTasks) throw SpecError("num_tasks must be <= " + std::to_string(kMaxTasks));
  if (num_concepts < 3) throw SpecError("need at least 3 concepts");
  if (num_attributes < 1 || num_attributes > 6) throw SpecError("num_attributes must be in [1, 6]");
  if (layout.region_count < 4 || layout.region_count > 8) throw SpecError("region_count must be in [4, 8]");
  if (layout.feature_dim < 1) throw SpecError("feature_dim must be >= 1");
  if (layout.question_len < 3) throw SpecError("question_len must be >= 3");
  if (!(jitter > 0.0) || !std::isfinite(jitter)) throw SpecError("jitter must be positive");
  if (!std::isfinite(domain_shift) || domain_shift < 0.0) throw SpecError("domain_shift must be >= 0");
  if (synonyms < 1 || phrasings < 1) throw SpecError("synonyms and phrasings must be >= 1");
  if (const auto tokens = token_map(*this); static_cast<std::size_t>(tokens.end) > vocab_size) {
    throw SpecError("vocab_size must be at least " + std::to_string(tokens.end) + " for this question vocabulary");
  }
  if (train_per_task == 0 || standard_test_per_task == 0 || comp_test_per_task == 0) {
    throw SpecError("every split needs at least one sample");
  }
  if (comp_fold < 0 || comp_fold >= 5) throw SpecError("comp_fold must be in [0, 5)");
  for (std::size_t t = 0; t < num_tasks; ++t) {
    const Skill& s = skill_catalogue()[t];
    if (static_cast<std::size_t>(s.label_offset + s.label_count) > answer_classes) {
      throw SpecError("skill " + std::string(s.name) + " needs " + std::to_string(s.label_offset + s.label_count) +
                      " answer classes");
    }
  }
  if (!order.empty()) {
    std::vector<std::size_t> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (sorted.size() != num_tasks || sorted[i] != i) throw SpecError("order is not a permutation of the tasks");
    }
  }

  const auto pairs = heldout_pairs();
  for (const auto& p : pairs) {
    const std::string name = "(" + std::to_string(p.skill) + "," + std::to_string(p.concept_id) + ")";
    if (p.skill < 0 || static_cast<std::size_t>(p.skill) >= num_tasks) {
      throw SpecError("held-out pair " + name + " references a skill outside the stream");
    }
    if (p.concept_id < 0 || static_cast<std::size_t>(p.concept_id) >= num_concepts) {
      throw SpecError("held-out pair " + name + " references an unknown concept");
    }
  }
  for (std::size_t t = 0; t < num_tasks; ++t) {
    const Skill& s = skill_catalogue()[t];
    std::size_t held = 0;
    HeldoutPair last{};
    for (const auto& p : pairs) {
      if (p.skill == s.id) {
        ++held;
        last = p;
      }
    }
    const std::size_t needed = s.kind == SkillKind::kCompare ? 2 : 1;
    if (num_concepts - held < needed) {
      throw SpecError("held-out pair (" + std::to_string(last.skill) + "," + std::to_string(last.concept_id) +
                      ") leaves skill " + std::string(s.name) + " without trainable concepts");
    }
  }
}

TokenMap token_map(const StreamSpec& spec) {
  TokenMap m;
  m.fillers = spec.filler_words;
  m.synonyms = spec.synonyms;
  m.phrasings = spec.phrasings;
  const auto span = [](std::size_t a, std::size_t b) { return static_cast<int>(a * b); };
  m.filler_base = 1;
  m.concept_base = m.filler_base + static_cast<int>(spec.filler_words);
  m.second_base = m.concept_base + span(spec.num_concepts, spec.synonyms);
  m.end = m.second_base + span(spec.num_concepts, spec.synonyms);
  // Skill rows sit at the top of the table, past any unused rows.
  const int skills = span(spec.num_tasks, spec.phrasings);
  m.skill_base = std::max(m.end, static_cast<int>(spec.vocab_size) - skills);
  m.end = m.skill_base + skills;
  return m;
}

std::vector<HeldoutPair> StreamSpec::heldout_pairs() const {
  if (explicit_heldout) return heldout;
  std::vector<HeldoutPair> out;
  if (!comp_enabled) return out;
  for (std::size_t t = 0; t < num_tasks; ++t) {
    const int group = static_cast<int>((t + static_cast<std::size_t>(comp_fold)) % 5);
    for (std::size_t c = 0; c < num_concepts; ++c) {
      if (static_cast<int>(c % 5) == group) out.push_back({static_cast<int>(t), static_cast<int>(c)});
    }
  }
  return out;
}

std::vector<std::size_t> StreamSpec::task_order() const {
  if (!order.empty()) return order;
  std::vector<std::size_t> out(num_tasks);
  std::iota(out.begin(), out.end(), std::size_t{0});
  return out;
}

std::vector<Concept> make_concepts(const StreamSpec& spec) {
  const std::size_t dv = spec.layout.feature_dim;
  Rng rng(derive_seed(spec.seed, "concepts"));
  std::vector<std::vector<double>> colors(spec.num_attributes, std::vector<double>(dv));
  for (auto& c : colors) {
    for (double& v : c) v = rng.normal();
  }
  std::vector<Concept> concepts(spec.num_concepts);
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    Concept& c = concepts[i];
    c.id = static_cast<int>(i);
    c.attribute = static_cast<int>(i % spec.num_attributes);
    c.prototype.resize(dv);
    for (std::size_t k = 0; k < dv; ++k) {
      c.prototype[k] = rng.normal() + 1.5 * colors[static_cast<std::size_t>(c.attribute)][k];
    }
  }
  double min_dist = INFINITY;
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    for (std::size_t j = i + 1; j < concepts.size(); ++j) {
      min_dist = std::min(min_dist, distance(concepts[i].prototype, concepts[j].prototype, {}));
    }
  }
  const double required = 4.0 * spec.jitter * 1.25;
  if (min_dist < required) {
    const double factor = required / min_dist;
    for (auto& c : concepts) {
      for (double& v : c.prototype) v *= factor;
    }
  }
  return concepts;
}

std::vector<double> task_shift(const StreamSpec& spec, int task_id) {
  std::vector<double> shift(spec.layout.feature_dim, 0.0);
  if (spec.domain_shift == 0.0) return shift;
  Rng rng(derive_seed(spec.seed, "domain_shift", static_cast<std::uint64_t>(task_id)));
  double norm = 0.0;
  for (double& v : shift) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : shift) v *= spec.domain_shift / norm;
  return shift;
}

int answer_oracle(std::span<const double> regions, const SampleLayout& layout, const Skill& skill,
                  const Concept& concept_a, const Concept* concept_b, std::span<const double> shift,
                  double jitter, std::size_t num_attributes) {
  if (regions.size() != layout.region_count * layout.feature_dim) {
    throw InputError("scene has " + std::to_string(regions.size()) + " values");
  }
  const int n = count_near(regions, layout, concept_a, shift, jitter);
  switch (variant_of(skill)) {
    case Variant::kExact:
      return skill.label_offset + n;
    case Variant::kBucket:
      return skill.label_offset + std::min(n, 4);
    case Variant::kParity:
      return skill.label_offset + n % 2;
    case Variant::kLow:
      return skill.label_offset + std::min(n, 2);
    case Variant::kPresent:
      return skill.label_offset + (n > 0 ? 0 : 1);
    case Variant::kAbsent:
      return skill.label_offset + (n == 0 ? 0 : 1);
    case Variant::kColor:
      return skill.label_offset + concept_a.attribute;
    case Variant::kColorShift:
      return skill.label_offset + (concept_a.attribute + 1) % static_cast<int>(num_attributes);
    case Variant::kMore:
    case Variant::kFewer: {
      if (concept_b == nullptr) throw InputError("compare skill needs two concepts");
      const int m = count_near(regions, layout, *concept_b, shift, jitter);
      if (n == m) throw InputError("compare scene has equal counts");
      const bool first_wins = variant_of(skill) == Variant::kMore ? n > m : n < m;
      return skill.label_offset + (first_wins ? 0 : 1);
    }
  }
  return -1;
}

namespace {

class TaskGenerator {
 public:
  TaskGenerator(const StreamSpec& spec, int task_id, const std::vector<Concept>& concepts)
      : spec_(spec),
        skill_(skill_catalogue().at(static_cast<std::size_t>(task_id))),
        concepts_(concepts),
        shift_(task_shift(spec, task_id)),
        tokens_(token_map(spec)),
        rng_(derive_seed(spec.seed ^ static_cast<std::uint64_t>(task_id), "task")) {
    const auto pairs = spec.heldout_pairs();
    for (const auto& c : concepts_) {
      const bool held = std::any_of(pairs.begin(), pairs.end(),
                                    [&](const HeldoutPair& p) { return p.skill == skill_.id && p.concept_id == c.id; });
      (held ? heldout_ : allowed_).push_back(c.id);
    }
  }

  Sample make(Split split) {
    const bool comp = split == Split::kComp && !heldout_.empty();
    const auto& primary_pool = comp ? heldout_ : allowed_;
    const int c1 = primary_pool[rng_.below(primary_pool.size())];
    int c2 = -1;
    if (skill_.kind == SkillKind::kCompare) {
      do {
        c2 = allowed_[rng_.below(allowed_.size())];
      } while (c2 == c1);
    }
    const int r = static_cast<int>(spec_.layout.region_count);
    // Count answers cannot exceed the number of regions.
    int choices = skill_.label_count;
    if (variant_of(skill_) == Variant::kExact) choices = std::min(choices, r + 1);
    const int label = skill_.label_offset + static_cast<int>(rng_.below(static_cast<std::uint64_t>(choices)));
    const int local = label - skill_.label_offset;

    int n1 = 0, n2 = 0;
    switch (variant_of(skill_)) {
      case Variant::kExact:
        n1 = local;
        break;
      case Variant::kBucket:
        n1 = local < 4 ? local : 4 + uniform_int(0, r - 4);
        break;
      case Variant::kParity:
        do {
          n1 = uniform_int(0, r);
        } while (n1 % 2 != local);
        break;
      case Variant::kLow:
        n1 = local < 2 ? local : uniform_int(2, r);
        break;
      case Variant::kPresent:
        n1 = local == 0 ? uniform_int(1, 3) : 0;
        break;
      case Variant::kAbsent:
        n1 = local == 0 ? 0 : uniform_int(1, 3);
        break;
      case Variant::kColor:
      case Variant::kColorShift:
        n1 = uniform_int(1, 3);
        break;
      case Variant::kMore:
      case Variant::kFewer: {
        // local 0: the first concept wins.
        const bool first_larger = (variant_of(skill_) == Variant::kMore) == (local == 0);
        do {
          n1 = uniform_int(0, r);
          n2 = uniform_int(0, r);
        } while (n1 == n2 || n1 + n2 > r || (n1 > n2) != first_larger);
        break;
      }
    }
    // Attribute answers are fixed by the concept, so draw the concept to match.
    Sample s;
    s.skill = skill_.id;
    s.concept_id = c1;
    s.concept2 = c2;
    std::vector<int> slots(static_cast<std::size_t>(n1), c1);
    slots.insert(slots.end(), static_cast<std::size_t>(n2), c2);
    if (static_cast<int>(slots.size()) > r) throw SpecError("scene needs more regions than the layout has");
    while (static_cast<int>(slots.size()) < r) {
      int d;
      do {
        d = static_cast<int>(rng_.below(concepts_.size()));
      } while (d == c1 || d == c2);
      slots.push_back(d);
    }
    rng_.shuffle(slots.begin(), slots.end());

    const std::size_t dv = spec_.layout.feature_dim;
    const double per_dim = spec_.jitter / std::sqrt(static_cast<double>(dv));
    s.regions.resize(static_cast<std::size_t>(r) * dv);
    std::vector<double> noise(dv);
    for (std::size_t i = 0; i < slots.size(); ++i) {
      double norm;
      do {
        norm = 0.0;
        for (double& v : noise) {
          v = rng_.normal() * per_dim;
          norm += v * v;
        }
      } while (std::sqrt(norm) >= 1.9 * spec_.jitter);
      const auto& proto = concepts_[static_cast<std::size_t>(slots[i])].prototype;
      for (std::size_t k = 0; k < dv; ++k) s.regions[i * dv + k] = proto[k] + shift_[k] + noise[k];
    }

    s.question.assign(spec_.layout.question_len, kPadToken);
    s.question[0] = tokens_.skill_token(skill_.id, rng_.below(tokens_.phrasings));
    s.question[1] = tokens_.concept_token(c1, rng_.below(tokens_.synonyms));
    for (std::size_t q = 2; q < s.question.size(); ++q) {
      if (q == 2 && c2 >= 0) {
        s.question[q] = tokens_.second_token(c2, rng_.below(tokens_.synonyms));
      } else if (tokens_.fillers > 0) {
        s.question[q] = tokens_.filler(rng_.below(tokens_.fillers));
      }
    }

    const Concept* second = c2 >= 0 ? &concepts_[static_cast<std::size_t>(c2)] : nullptr;
    s.answer = answer_oracle(s.regions, spec_.layout, skill_, concepts_[static_cast<std::size_t>(c1)], second,
                             shift_, spec_.jitter, spec_.num_attributes);
    if (skill_.kind != SkillKind::kAttribute && s.answer != label) {
      throw SpecError("generator produced an inconsistent " + split_name(split) + " scene");
    }
    return s;
  }

  int skill() const { return skill_.id; }

 private:
  int uniform_int(int lo, int hi) { return lo + static_cast<int>(rng_.below(static_cast<std::uint64_t>(hi - lo + 1))); }

  const StreamSpec& spec_;
  const Skill& skill_;
  const std::vector<Concept>& concepts_;
  std::vector<double> shift_;
  TokenMap tokens_;
  Rng rng_;
  std::vector<int> allowed_, heldout_;
};

}  // namespace

TaskDataset build_task(const StreamSpec& spec, int task_id, const std::vector<Concept>& concepts) {
  TaskGenerator gen(spec, task_id, concepts);
  TaskDataset ds;
  ds.task_id = task_id;
  ds.skill = gen.skill();
  for (std::size_t i = 0; i < spec.train_per_task; ++i) ds.train.push_back(gen.make(Split::kTrain));
  for (std::size_t i = 0; i < spec.standard_test_per_task; ++i) ds.standard_test.push_back(gen.make(Split::kStandard));
  for (std::size_t i = 0; i < spec.comp_test_per_task; ++i) ds.comp_test.push_back(gen.make(Split::kComp));
  return ds;
}

Stream build_stream(const StreamSpec& spec) {
  spec.validate();
  const auto concepts = make_concepts(spec);
  std::vector<TaskDataset> by_id(spec.num_tasks);
  const auto n = static_cast<std::int64_t>(spec.num_tasks);
  // Each task owns its RNG, so parallel and serial generation agree.
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t t = 0; t < n; ++t) {
    by_id[static_cast<std::size_t>(t)] = build_task(spec, static_cast<int>(t), concepts);
  }
  Stream stream;
  stream.layout = spec.layout;
  for (std::size_t id : spec.task_order()) stream.tasks.push_back(std::move(by_id[id]));
  return stream;
}

std::vector<std::size_t> named_order(std::string_view name, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (name == "default") return order;
  if (name == "reverse") {
    std::reverse(order.begin(), order.end());
    return order;
  }
  if (name == "random") {
    Rng rng(derive_seed(seed, "order"));
    // Avoid degenerating into the default or reverse order.
    const auto identity = order;
    auto reversed = order;
    std::reverse(reversed.begin(), reversed.end());
    for (int attempt = 0; attempt < 64; ++attempt) {
      rng.shuffle(order.begin(), order.end());
      if (n < 3 || (order != identity && order != reversed)) break;
    }
    return order;
  }
  throw ConfigError("unknown task order '" + std::string(name) + "'");
}

Stream reorder(const Stream& stream, std::span<const std::size_t> order) {
  if (order.size() != stream.tasks.size()) throw ConfigError("order length does not match the stream");
  Stream out;
  out.layout = stream.layout;
  for (std::size_t id : order) {
    auto it = std::find_if(stream.tasks.begin(), stream.tasks.end(),
                           [&](const TaskDataset& t) { return t.task_id == static_cast<int>(id); });
    if (it == stream.tasks.end()) throw ConfigError("order references unknown task " + std::to_string(id));
    out.tasks.push_back(*it);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stream file: a header line, one "task" line per dataset, then one line per
// sample. Doubles use the shortest round-trip decimal form.

namespace {

constexpr std::string_view kStreamMagic = "AIMSTREAM1";

void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

void write_sample(std::string& line, int task_id, const char* split, const Sample& s) {
  line.clear();
  line += "s " + std::to_string(task_id) + " " + split + " " + std::to_string(s.skill) + " " +
          std::to_string(s.concept_id) + " " + std::to_string(s.concept2) + " " + std::to_string(s.answer) + " q";
  for (int tok : s.question) line += " " + std::to_string(tok);
  line += " r";
  for (double v : s.regions) {
    line += ' ';
    append_double(line, v);
  }
  line += '\n';
}

class LineParser {
 public:
  LineParser(std::string_view line, std::size_t number) : rest_(line), number_(number) {}

  std::string_view word() {
    while (!rest_.empty() && rest_.front() == ' ') rest_.remove_prefix(1);
    if (rest_.empty()) throw ParseError(number_, "unexpected end of line");
    const auto end = rest_.find(' ');
    auto w = rest_.substr(0, end);
    rest_.remove_prefix(end == std::string_view::npos ? rest_.size() : end);
    return w;
  }

  void expect(std::string_view literal) {
    auto w = word();
    if (w != literal) throw ParseError(number_, "expected '" + std::string(literal) + "', got '" + std::string(w) + "'");
  }

  long long integer() {
    auto w = word();
    long long v = 0;
    auto res = std::from_chars(w.data(), w.data() + w.size(), v);
    if (res.ec != std::errc() || res.ptr != w.data() + w.size()) {
      throw ParseError(number_, "bad integer '" + std::string(w) + "'");
    }
    return v;
  }

  double real() {
    auto w = word();
    double v = 0;
    auto res = std::from_chars(w.data(), w.data() + w.size(), v);
    if (res.ec != std::errc() || res.ptr != w.data() + w.size()) {
      throw ParseError(number_, "bad number '" + std::string(w) + "'");
    }
    return v;
  }

  // key=value with an unsigned value
  std::size_t keyed(std::string_view key) {
    auto w = word();
    if (w.substr(0, key.size()) != key || w.size() <= key.size() + 1 || w[key.size()] != '=') {
      throw ParseError(number_, "expected " + std::string(key) + "=<n>");
    }
    auto v = w.substr(key.size() + 1);
    std::size_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw ParseError(number_, "bad value for " + std::string(key));
    return out;
  }

  void finish() {
    while (!rest_.empty() && rest_.front() == ' ') rest_.remove_prefix(1);
    if (!rest_.empty()) throw ParseError(number_, "trailing data");
  }

 private:
  std::string_view rest_;
  std::size_t number_;
};

}  // namespace

void write_stream(const Stream& stream, std::ostream& out) {
  out << kStreamMagic << " tasks=" << stream.tasks.size() << " regions=" << stream.layout.region_count
      << " feature_dim=" << stream.layout.feature_dim << " question_len=" << stream.layout.question_len << '\n';
  for (const auto& t : stream.tasks) {
    out << "task " << t.task_id << " skill=" << t.skill << " train=" << t.train.size()
        << " standard=" << t.standard_test.size() << " comp=" << t.comp_test.size() << '\n';
  }
  std::string line;
  for (const auto& t : stream.tasks) {
    for (const auto& s : t.train) {
      write_sample(line, t.task_id, "train", s);
      out << line;
    }
    for (const auto& s : t.standard_test) {
      write_sample(line, t.task_id, "standard", s);
      out << line;
    }
    for (const auto& s : t.comp_test) {
      write_sample(line, t.task_id, "comp", s);
      out << line;
    }
  }
}

void write_stream(const Stream& stream, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_stream(stream, out);
  if (!out) throw IoError("write failed for " + path.string());
}

Stream read_stream(std::istream& in) {
  std::string line;
  std::size_t number = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++number;
    return true;
  };
  if (!next()) throw ParseError(1, "missing header");
  Stream stream;
  std::size_t task_count = 0;
  {
    LineParser p(line, number);
    p.expect(kStreamMagic);
    task_count = p.keyed("tasks");
    stream.layout.region_count = p.keyed("regions");
    stream.layout.feature_dim = p.keyed("feature_dim");
    stream.layout.question_len = p.keyed("question_len");
    p.finish();
  }
  struct Expected {
    std::size_t train, standard, comp;
  };
  std::vector<Expected> expected;
  for (std::size_t i = 0; i < task_count; ++i) {
    if (!next()) throw ParseError(number + 1, "missing task line");
    LineParser p(line, number);
    p.expect("task");
    TaskDataset t;
    t.task_id = static_cast<int>(p.integer());
    t.skill = static_cast<int>(p.keyed("skill"));
    Expected e{p.keyed("train"), p.keyed("standard"), p.keyed("comp")};
    p.finish();
    stream.tasks.push_back(std::move(t));
    expected.push_back(e);
  }

  const std::size_t values = stream.layout.region_count * stream.layout.feature_dim;
  for (std::size_t ti = 0; ti < stream.tasks.size(); ++ti) {
    auto& t = stream.tasks[ti];
    const std::pair<std::vector<Sample>*, std::size_t> splits[] = {
        {&t.train, expected[ti].train}, {&t.standard_test, expected[ti].standard}, {&t.comp_test, expected[ti].comp}};
    const char* names[] = {"train", "standard", "comp"};
    for (int si = 0; si < 3; ++si) {
      auto [target, count] = splits[si];
      target->reserve(count);
      for (std::size_t k = 0; k < count; ++k) {
        if (!next()) throw ParseError(number + 1, "unexpected end of file");
        LineParser p(line, number);
        p.expect("s");
        if (p.integer() != t.task_id) throw ParseError(number, "sample belongs to a different task");
        p.expect(names[si]);
        Sample s;
        s.skill = static_cast<int>(p.integer());
        s.concept_id = static_cast<int>(p.integer());
        s.concept2 = static_cast<int>(p.integer());
        s.answer = static_cast<int>(p.integer());
        p.expect("q");
        for (std::size_t q = 0; q < stream.layout.question_len; ++q) s.question.push_back(static_cast<int>(p.integer()));
        p.expect("r");
        s.regions.reserve(values);
        for (std::size_t v = 0; v < values; ++v) s.regions.push_back(p.real());
        p.finish();
        target->push_back(std::move(s));
      }
    }
  }
  if (next() && !line.empty()) throw ParseError(number, "unexpected trailing record");
  return stream;
}

Stream load_stream(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return read_stream(in);
}

}  // namespace aim
