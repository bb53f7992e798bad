#include "app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>

#include "aim/error.hpp"
#include "aim/io.hpp"

namespace aim::app {

namespace fs = std::filesystem;
using nlohmann::json;

SweepSpec::SweepSpec() {
  for (double vis : {0.1, 0.3, 0.5}) {
    for (double text : {0.3, 0.5, 0.7}) ratios.push_back({vis, 0.1, text});
  }
}

namespace {

// Reads the keys of one config object, rejecting anything it was not asked for.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + " must be an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    const json* v = raw(key);
    if (!v) return;
    bool ok = false;
    if constexpr (std::is_same_v<T, bool>) {
      ok = v->is_boolean();
    } else if constexpr (std::is_unsigned_v<T>) {
      ok = v->is_number_unsigned();
    } else if constexpr (std::is_integral_v<T>) {
      ok = v->is_number_integer();
    } else if constexpr (std::is_floating_point_v<T>) {
      ok = v->is_number();
    } else {
      ok = v->is_string();
    }
    if (!ok) throw ConfigError(path(key) + " has the wrong type");
    out = v->get<T>();
  }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return name_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown key '" + path(item.key()) + "'");
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

MaskConfig parse_ratios(const json& j, const std::string& name) {
  MaskConfig m;
  Section s(j, name);
  s.get("vis", m.vis);
  s.get("shared", m.shared);
  s.get("text", m.text);
  s.finish();
  return m;
}

json ratios_json(const MaskConfig& m) { return {{"vis", m.vis}, {"shared", m.shared}, {"text", m.text}}; }

template <class T, class Fn>
std::vector<T> parse_list(const json& j, const std::string& name, Fn fn) {
  if (!j.is_array() || j.empty()) throw ConfigError(name + " must be a non-empty array");
  std::vector<T> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(fn(j[i], name + "[" + std::to_string(i) + "]"));
  return out;
}

std::string as_string(const json& j, const std::string& name) {
  if (!j.is_string()) throw ConfigError(name + " must be a string");
  return j.get<std::string>();
}

std::size_t as_size(const json& j, const std::string& name) {
  if (!j.is_number_unsigned()) throw ConfigError(name + " must be a non-negative integer");
  return j.get<std::size_t>();
}

void parse_stream(const json& j, RunConfig& cfg) {
  auto& st = cfg.stream;
  Section s(j, "stream");
  s.get("num_tasks", st.num_tasks);
  s.get("num_concepts", st.num_concepts);
  s.get("num_attributes", st.num_attributes);
  s.get("train_per_task", st.train_per_task);
  s.get("standard_test_per_task", st.standard_test_per_task);
  s.get("comp_test_per_task", st.comp_test_per_task);
  s.get("comp_enabled", st.comp_enabled);
  s.get("comp_fold", st.comp_fold);
  s.get("all_folds", cfg.all_folds);
  if (const json* h = s.raw("heldout")) {
    st.explicit_heldout = true;
    st.heldout = parse_list<HeldoutPair>(*h, s.path("heldout"), [](const json& p, const std::string& name) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer()) {
        throw ConfigError(name + " must be [skill, concept]");
      }
      return HeldoutPair{p[0].get<int>(), p[1].get<int>()};
    });
  }
  if (const json* o = s.raw("order")) {
    if (o->is_string()) {
      cfg.order = o->get<std::string>();
    } else {
      st.order = parse_list<std::size_t>(*o, s.path("order"), as_size);
    }
  }
  s.get("jitter", st.jitter);
  s.get("domain_shift", st.domain_shift);
  s.get("synonyms", st.synonyms);
  s.get("phrasings", st.phrasings);
  s.get("filler_words", st.filler_words);
  s.get("region_count", st.layout.region_count);
  s.get("feature_dim", st.layout.feature_dim);
  s.get("question_len", st.layout.question_len);
  s.get("vocab_size", st.vocab_size);
  s.get("answer_classes", st.answer_classes);
  s.finish();
}

void parse_model(const json& j, ModelConfig& m) {
  Section s(j, "model");
  s.get("shared_dim", m.shared_dim);
  s.get("shared_layers", m.shared_layers);
  s.get("text_layers", m.text_layers);
  s.finish();
}

template <class Parse>
auto parse_enum(Section& s, const std::string& key, Parse parse) -> std::optional<decltype(parse(""))> {
  std::string name;
  if (!s.raw(key)) return std::nullopt;
  s.get(key, name);
  return parse(name);
}

void parse_method_section(const json& j, MethodConfig& m) {
  Section s(j, "method");
  if (auto v = parse_enum(s, "name", parse_method)) m.method = *v;
  if (auto v = parse_enum(s, "variant", parse_mask_variant)) m.variant = *v;
  if (auto v = parse_enum(s, "aggregation", parse_aggregation)) m.aggregation = *v;
  if (auto v = parse_enum(s, "optimizer", parse_optimizer)) m.optimizer = *v;
  if (const json* r = s.raw("ratios")) m.ratios = parse_ratios(*r, s.path("ratios"));
  s.get("ewc_lambda", m.ewc_lambda);
  s.get("ewc_running_sum", m.ewc_running_sum);
  s.get("memory", m.memory);
  s.get("replay_weight", m.replay_weight);
  s.get("replay_batch", m.replay_batch);
  s.get("epochs", m.epochs);
  s.get("batch_size", m.batch_size);
  s.get("lr", m.lr);
  s.get("weight_decay", m.weight_decay);
  s.get("fisher_samples", m.fisher_samples);
  s.get("parallel", m.parallel);
  s.finish();
}

void parse_sweep(const json& j, SweepSpec& sw) {
  Section s(j, "sweep");
  if (const json* v = s.raw("memory")) sw.memory = parse_list<std::size_t>(*v, s.path("memory"), as_size);
  if (const json* v = s.raw("ratios")) sw.ratios = parse_list<MaskConfig>(*v, s.path("ratios"), parse_ratios);
  if (const json* v = s.raw("order")) sw.order = parse_list<std::string>(*v, s.path("order"), as_string);
  if (const json* v = s.raw("aggregation")) {
    sw.aggregation = parse_list<Aggregation>(*v, s.path("aggregation"), [](const json& x, const std::string& n) {
      return parse_aggregation(as_string(x, n));
    });
  }
  if (const json* v = s.raw("variant")) {
    sw.variant = parse_list<MaskVariant>(*v, s.path("variant"), [](const json& x, const std::string& n) {
      return parse_mask_variant(as_string(x, n));
    });
  }
  s.finish();
}

}  // namespace

void RunConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (!stream_file) {
    stream.validate();
    if (stream.order.empty()) named_order(order, stream.num_tasks, 0);
  } else if (!fs::exists(*stream_file)) {
    throw ConfigError("stream_file '" + stream_file->string() + "' does not exist");
  }
  if (all_folds && (stream_file || stream.explicit_heldout || !stream.comp_enabled)) {
    throw ConfigError("stream.all_folds needs generated streams with the default held-out rotation");
  }
  method.validate();
  for (const auto& r : sweep.ratios) r.validate();
  for (const auto& o : sweep.order) named_order(o, stream.num_tasks, 0);
}

RunConfig parse_config(const json& j) {
  RunConfig cfg;
  Section s(j, "config");
  if (const json* v = s.raw("stream")) parse_stream(*v, cfg);
  if (const json* v = s.raw("model")) parse_model(*v, cfg.model);
  if (const json* v = s.raw("method")) parse_method_section(*v, cfg.method);
  if (const json* v = s.raw("sweep")) parse_sweep(*v, cfg.sweep);
  if (const json* v = s.raw("seeds")) {
    cfg.seeds = parse_list<std::uint64_t>(*v, "seeds", [](const json& x, const std::string& n) {
      return static_cast<std::uint64_t>(as_size(x, n));
    });
  }
  if (const json* v = s.raw("stream_file")) cfg.stream_file = fs::path(as_string(*v, "stream_file"));
  s.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  auto cfg = parse_config(j);
  if (cfg.stream_file && cfg.stream_file->is_relative()) {
    cfg.stream_file = path.parent_path() / *cfg.stream_file;
  }
  return cfg;
}

json to_json(const RunConfig& cfg) {
  const auto& st = cfg.stream;
  json stream = {{"num_tasks", st.num_tasks},
                 {"num_concepts", st.num_concepts},
                 {"num_attributes", st.num_attributes},
                 {"train_per_task", st.train_per_task},
                 {"standard_test_per_task", st.standard_test_per_task},
                 {"comp_test_per_task", st.comp_test_per_task},
                 {"comp_enabled", st.comp_enabled},
                 {"comp_fold", st.comp_fold},
                 {"all_folds", cfg.all_folds},
                 {"jitter", st.jitter},
                 {"domain_shift", st.domain_shift},
                 {"synonyms", st.synonyms},
                 {"phrasings", st.phrasings},
                 {"filler_words", st.filler_words},
                 {"region_count", st.layout.region_count},
                 {"feature_dim", st.layout.feature_dim},
                 {"question_len", st.layout.question_len},
                 {"vocab_size", st.vocab_size},
                 {"answer_classes", st.answer_classes}};
  if (st.order.empty()) {
    stream["order"] = cfg.order;
  } else {
    stream["order"] = st.order;
  }
  if (st.explicit_heldout) {
    json pairs = json::array();
    for (const auto& p : st.heldout) pairs.push_back({p.skill, p.concept_id});
    stream["heldout"] = pairs;
  }
  const auto& m = cfg.method;
  json method = {{"name", to_string(m.method)},
                 {"variant", to_string(m.variant)},
                 {"aggregation", to_string(m.aggregation)},
                 {"ratios", ratios_json(m.ratios)},
                 {"ewc_lambda", m.ewc_lambda},
                 {"ewc_running_sum", m.ewc_running_sum},
                 {"memory", m.memory},
                 {"replay_weight", m.replay_weight},
                 {"replay_batch", m.replay_batch},
                 {"epochs", m.epochs},
                 {"batch_size", m.batch_size},
                 {"lr", m.lr},
                 {"optimizer", to_string(m.optimizer)},
                 {"weight_decay", m.weight_decay},
                 {"fisher_samples", m.fisher_samples},
                 {"parallel", m.parallel}};
  json ratios = json::array();
  for (const auto& r : cfg.sweep.ratios) ratios.push_back(ratios_json(r));
  json aggs = json::array(), variants = json::array();
  for (auto a : cfg.sweep.aggregation) aggs.push_back(to_string(a));
  for (auto v : cfg.sweep.variant) variants.push_back(to_string(v));
  json out = {{"stream", stream},
              {"model",
               {{"shared_dim", cfg.model.shared_dim},
                {"shared_layers", cfg.model.shared_layers},
                {"text_layers", cfg.model.text_layers}}},
              {"method", method},
              {"seeds", cfg.seeds},
              {"sweep",
               {{"memory", cfg.sweep.memory},
                {"ratios", ratios},
                {"order", cfg.sweep.order},
                {"aggregation", aggs},
                {"variant", variants}}}};
  if (cfg.stream_file) out["stream_file"] = cfg.stream_file->string();
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || item.front() == '-') throw ConfigError("bad seed '" + item + "'");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw ConfigError("seed list is empty");
  return seeds;
}

Stream stream_for(const RunConfig& cfg, std::uint64_t seed, int fold) {
  if (cfg.stream_file) return load_stream(*cfg.stream_file);
  StreamSpec spec = cfg.stream;
  spec.seed = seed;
  spec.comp_fold = fold;
  if (spec.order.empty()) spec.order = named_order(cfg.order, spec.num_tasks, seed);
  return build_stream(spec);
}

ModelConfig model_for(const RunConfig& cfg, const Stream& stream, std::uint64_t seed) {
  ModelConfig m = model_config_for(stream, cfg.model);
  m.vocab_size = cfg.stream.vocab_size;
  m.answer_classes = cfg.stream.answer_classes;
  m.seed = seed;
  return m;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

struct Metrics {
  double standard_ap = 0, standard_af = 0, comp_ap = 0, comp_af = 0;
  bool af_defined = false;
};

Metrics metrics_of(const RunResult& r) {
  Metrics m;
  m.standard_ap = average_performance(r.standard);
  m.comp_ap = average_performance(r.comp);
  const auto sf = forgetting_or_zero(r.standard);
  const auto cf = forgetting_or_zero(r.comp);
  m.standard_af = sf.value;
  m.comp_af = cf.value;
  m.af_defined = sf.defined;
  return m;
}

std::string metrics_text(const Metrics& m) {
  std::ostringstream s;
  s << "standard_ap: " << format_double(m.standard_ap) << '\n'
    << "standard_af: " << format_double(m.standard_af) << '\n'
    << "comp_ap: " << format_double(m.comp_ap) << '\n'
    << "comp_af: " << format_double(m.comp_af) << '\n'
    << "af_defined: " << (m.af_defined ? "true" : "false") << '\n';
  return s.str();
}

// One training run with per-task artifacts flushed as each task completes.
Metrics train_one(const RunConfig& cfg, std::uint64_t seed, int fold, const fs::path& dir, std::ostream& log) {
  fs::create_directories(dir);
  fs::remove(dir / "INCOMPLETE");
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
  try {
    const Stream stream = stream_for(cfg, seed, fold);
    const ModelConfig model = model_for(cfg, stream, seed);
    MethodConfig method = cfg.method;
    method.seed = seed;
    const auto digest = model.digest();

    std::ofstream runlog(dir / "run.log.jsonl", std::ios::binary);
    RunHooks hooks;
    hooks.log = [&](const LogRecord& r) {
      json rec = {{"timestamp", timestamp()}, {"task", r.task + 1}, {"epoch", r.epoch + 1},
                  {"step", r.step},           {"loss", r.loss},     {"method", r.method}};
      runlog << rec.dump() << '\n';
      runlog.flush();
    };
    hooks.on_task_end = [&](const TaskEnd& e) {
      const std::string k = std::to_string(e.position + 1);
      write_vector(dir / ("task_" + k + ".ckpt"), kCheckpointMagic, digest, e.params);
      write_vector(dir / ("fisher_" + k + ".fsh"), kFisherMagic, digest, e.state->fisher.aggregated);
      if (e.state->masks) write_mask(dir / ("mask_" + k + ".msk"), digest, *e.state->masks);
    };
    const auto result = run_sequence(stream, model, method, hooks);

    const auto write_csv = [&](const fs::path& p, const auto& fn) {
      std::ofstream out(p, std::ios::binary);
      if (!out) throw IoError("cannot write '" + p.string() + "'");
      fn(out);
    };
    write_csv(dir / "matrix_standard.csv", [&](std::ostream& o) { write_matrix_csv(o, result.standard, result.task_names); });
    write_csv(dir / "matrix_comp.csv", [&](std::ostream& o) { write_matrix_csv(o, result.comp, result.task_names); });
    write_csv(dir / "shift.csv", [&](std::ostream& o) { write_shift_csv(o, result.shifts); });
    const auto m = metrics_of(result);
    write_text(dir / "summary.txt", "method: " + std::string(to_string(cfg.method.method)) + "\nseed: " +
                                        std::to_string(seed) + "\n" + metrics_text(m));
    log << "  " << dir.filename().string() << ": standard AP " << std::fixed << std::setprecision(2) << m.standard_ap
        << " AF " << m.standard_af << " | comp AP " << m.comp_ap << " AF " << m.comp_af << '\n';
    log.unsetf(std::ios::floatfield);
    return m;
  } catch (const std::exception& e) {
    write_text(dir / "INCOMPLETE", std::string(e.what()) + "\n");
    throw;
  }
}

}  // namespace

void write_summary(const fs::path& path, const RunConfig& cfg, const TrainSummary& s) {
  std::ostringstream out;
  out << "method: " << s.method << '\n';
  out << "variant: " << to_string(cfg.method.variant) << '\n';
  out << "seeds:";
  for (const auto& r : s.seeds) out << ' ' << r.seed;
  out << '\n';
  std::map<std::string, std::vector<double>> cols;
  for (const auto& r : s.seeds) {
    const std::string p = "seed_" + std::to_string(r.seed) + ".";
    out << p << "standard_ap: " << format_double(r.standard_ap) << '\n';
    out << p << "standard_af: " << format_double(r.standard_af) << '\n';
    out << p << "comp_ap: " << format_double(r.comp_ap) << '\n';
    out << p << "comp_af: " << format_double(r.comp_af) << '\n';
    cols["standard_ap"].push_back(r.standard_ap);
    cols["standard_af"].push_back(r.standard_af);
    cols["comp_ap"].push_back(r.comp_ap);
    cols["comp_af"].push_back(r.comp_af);
  }
  for (const char* key : {"standard_ap", "standard_af", "comp_ap", "comp_af"}) {
    out << key << "_mean: " << format_double(mean(cols[key])) << '\n';
    out << key << "_std: " << format_double(stddev(cols[key])) << '\n';
  }
  const bool af = !s.seeds.empty() && std::all_of(s.seeds.begin(), s.seeds.end(), [](auto& r) { return r.af_defined; });
  out << "af_defined: " << (af ? "true" : "false") << '\n';
  write_text(path, out.str());
}

int cmd_gen(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  if (cfg.stream_file) throw ConfigError("gen builds a stream; drop stream_file from the config");
  const auto seed = cfg.seeds.front();
  const Stream stream = stream_for(cfg, seed, cfg.stream.comp_fold);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_stream(stream, out);
  log << "wrote " << out.string() << " (seed " << seed << ", " << stream.tasks.size() << " tasks)\n";
  for (const auto& t : stream.tasks) {
    log << "  task " << t.task_id << " " << skill_catalogue().at(static_cast<std::size_t>(t.skill)).name
        << ": train " << t.train.size() << ", standard " << t.standard_test.size() << ", comp "
        << t.comp_test.size() << '\n';
  }
  StreamSpec spec = cfg.stream;
  spec.seed = seed;
  log << "held-out pairs (skill, concept):";
  for (const auto& p : spec.heldout_pairs()) log << " (" << p.skill << "," << p.concept_id << ")";
  log << '\n';
  return 0;
}

int cmd_train(const RunConfig& cfg, const fs::path& out, std::ostream& log, TrainSummary* summary) {
  fs::create_directories(out);
  write_text(out / "config.json", to_json(cfg).dump(2) + "\n");
  TrainSummary s;
  s.method = std::string(to_string(cfg.method.method));
  log << "method " << s.method << " -> " << out.string() << '\n';
  for (auto seed : cfg.seeds) {
    const fs::path dir = out / ("seed_" + std::to_string(seed));
    SeedSummary r;
    r.seed = seed;
    if (!cfg.all_folds) {
      const auto m = train_one(cfg, seed, cfg.stream.comp_fold, dir, log);
      r = {seed, m.standard_ap, m.standard_af, m.comp_ap, m.comp_af, m.af_defined};
    } else {
      std::vector<Metrics> folds;
      for (int f = 0; f < 5; ++f) folds.push_back(train_one(cfg, seed, f, dir / ("fold_" + std::to_string(f)), log));
      auto avg = [&](double Metrics::*field) {
        double t = 0;
        for (const auto& m : folds) t += m.*field;
        return t / static_cast<double>(folds.size());
      };
      r = {seed, avg(&Metrics::standard_ap), avg(&Metrics::standard_af), avg(&Metrics::comp_ap),
           avg(&Metrics::comp_af), folds.front().af_defined};
      fs::create_directories(dir);
      Metrics m{r.standard_ap, r.standard_af, r.comp_ap, r.comp_af, r.af_defined};
      write_text(dir / "summary.txt", "method: " + s.method + "\nseed: " + std::to_string(seed) + "\nfolds: 5\n" +
                                          metrics_text(m));
    }
    s.seeds.push_back(r);
    write_summary(out / "summary.txt", cfg, s);
  }
  if (summary) *summary = s;
  return 0;
}

namespace {

struct AxisValue {
  std::string label;
  RunConfig cfg;
};

std::string ratio_label(const MaskConfig& r) {
  return "vis" + format_double(r.vis) + "_shared" + format_double(r.shared) + "_text" + format_double(r.text);
}

std::vector<AxisValue> axis_values(const RunConfig& cfg, const std::string& axis) {
  std::vector<AxisValue> out;
  auto add = [&](std::string label, auto&& edit) {
    RunConfig c = cfg;
    edit(c);
    c.validate();
    out.push_back({std::move(label), std::move(c)});
  };
  if (axis == "memory") {
    for (auto m : cfg.sweep.memory) add(std::to_string(m), [&](RunConfig& c) { c.method.memory = m; });
  } else if (axis == "ratios") {
    for (const auto& r : cfg.sweep.ratios) add(ratio_label(r), [&](RunConfig& c) { c.method.ratios = r; });
  } else if (axis == "order") {
    if (cfg.stream_file) throw ConfigError("the order axis needs generated streams");
    for (const auto& o : cfg.sweep.order) {
      add(o, [&](RunConfig& c) {
        c.order = o;
        c.stream.order.clear();
      });
    }
  } else if (axis == "aggregation") {
    for (auto a : cfg.sweep.aggregation) add(std::string(to_string(a)), [&](RunConfig& c) { c.method.aggregation = a; });
  } else if (axis == "variant") {
    for (auto v : cfg.sweep.variant) add(std::string(to_string(v)), [&](RunConfig& c) { c.method.variant = v; });
  } else {
    throw ConfigError("unknown sweep axis '" + axis + "' (memory, ratios, order, aggregation, variant)");
  }
  return out;
}

}  // namespace

int cmd_sweep(const RunConfig& cfg, const std::string& axis, const fs::path& out, std::ostream& log) {
  const auto values = axis_values(cfg, axis);
  fs::create_directories(out);
  write_text(out / "config.json", to_json(cfg).dump(2) + "\n");
  std::ostringstream csv, table;
  csv << "axis,value,split,ap_mean,ap_std,af_mean,af_std,seeds\n";
  table << std::fixed << std::setprecision(2);
  table << "sweep over " << axis << " (" << to_string(cfg.method.method) << ", " << cfg.seeds.size() << " seeds)\n";
  std::map<std::string, std::vector<double>> ap_means;
  for (const auto& v : values) {
    TrainSummary s;
    cmd_train(v.cfg, out / (axis + "_" + v.label), log, &s);
    for (const char* split : {"standard", "comp"}) {
      std::vector<double> ap, af;
      for (const auto& r : s.seeds) {
        const bool st = std::string(split) == "standard";
        ap.push_back(st ? r.standard_ap : r.comp_ap);
        af.push_back(st ? r.standard_af : r.comp_af);
      }
      csv << axis << ',' << v.label << ',' << split << ',' << format_double(mean(ap)) << ','
          << format_double(stddev(ap)) << ',' << format_double(mean(af)) << ',' << format_double(stddev(af)) << ','
          << s.seeds.size() << '\n';
      table << "  " << std::left << std::setw(32) << v.label << std::setw(9) << split << " AP " << mean(ap)
            << " +- " << stddev(ap) << "  AF " << mean(af) << " +- " << stddev(af) << '\n';
      ap_means[split].push_back(mean(ap));
    }
  }
  if (axis == "order") {
    for (const char* split : {"standard", "comp"}) {
      table << "  cross-order AP " << split << ": " << mean(ap_means[split]) << " +- " << stddev(ap_means[split])
            << '\n';
    }
  }
  write_text(out / ("sweep_" + axis + ".csv"), csv.str());
  write_text(out / ("sweep_" + axis + ".txt"), table.str());
  log << table.str();
  return 0;
}

namespace {

std::map<std::string, std::string> read_keyvals(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto colon = line.find(": ");
    if (colon == std::string::npos) continue;
    kv[line.substr(0, colon)] = line.substr(colon + 2);
  }
  return kv;
}

double number(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ParseError(0, "summary lacks '" + key + "'");
  return std::stod(it->second);
}

// Directory holding the matrices of the first seed (first fold when folds were run).
std::optional<fs::path> first_run_dir(const fs::path& run) {
  std::vector<fs::path> seeds;
  for (const auto& e : fs::directory_iterator(run)) {
    if (e.is_directory() && e.path().filename().string().rfind("seed_", 0) == 0) seeds.push_back(e.path());
  }
  if (seeds.empty()) return std::nullopt;
  std::sort(seeds.begin(), seeds.end());
  if (fs::exists(seeds.front() / "fold_0")) return seeds.front() / "fold_0";
  return seeds.front();
}

std::string svg_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

std::string heatmap_svg(const AccuracyMatrix& m, const std::vector<std::string>& names, const std::string& title) {
  const int cell = 56, left = 110, top = 60;
  const int n = static_cast<int>(m.size());
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + n * cell + 20 << "\" height=\""
    << top + n * cell + 40 << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"10\" y=\"20\" font-size=\"14\">" << svg_escape(title) << "</text>\n";
  s << "<text x=\"" << left << "\" y=\"40\">rows: after training task j; columns: evaluated task i</text>\n";
  for (int i = 0; i < n; ++i) {
    s << "<text x=\"" << left + i * cell + cell / 2 << "\" y=\"" << top + n * cell + 16
      << "\" text-anchor=\"middle\">" << svg_escape(names[static_cast<std::size_t>(i)]) << "</text>\n";
    s << "<text x=\"" << left - 6 << "\" y=\"" << top + i * cell + cell / 2 + 4 << "\" text-anchor=\"end\">"
      << svg_escape(names[static_cast<std::size_t>(i)]) << "</text>\n";
  }
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i <= j; ++i) {
      const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
      if (!m.has(ui, uj)) continue;
      const double v = m.at(ui, uj);
      const int shade = 255 - static_cast<int>(std::lround(v * 2.0));
      s << "<rect x=\"" << left + i * cell << "\" y=\"" << top + j * cell << "\" width=\"" << cell << "\" height=\""
        << cell << "\" fill=\"rgb(" << shade << "," << shade << ",255)\" stroke=\"#888\"/>\n";
      s << "<text x=\"" << left + i * cell + cell / 2 << "\" y=\"" << top + j * cell + cell / 2 + 4
        << "\" text-anchor=\"middle\">" << std::fixed << std::setprecision(1) << v << "</text>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

std::string shift_svg(const std::vector<ShiftRow>& rows, const std::string& title) {
  std::vector<std::string> transitions;
  for (const auto& r : rows) {
    if (std::find(transitions.begin(), transitions.end(), r.transition) == transitions.end()) {
      transitions.push_back(r.transition);
    }
  }
  double top_value = 1e-12;
  for (const auto& r : rows) top_value = std::max(top_value, r.l2_pct);
  const int bar = 16, group = 3 * bar + 24, left = 60, height = 220, base = 40 + height;
  const char* colors[3] = {"#4e79a7", "#f28e2b", "#59a14f"};
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + static_cast<int>(transitions.size()) * group + 140
    << "\" height=\"" << base + 50 << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"10\" y=\"20\" font-size=\"14\">" << svg_escape(title) << "</text>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << base << "\" x2=\""
    << left + static_cast<int>(transitions.size()) * group << "\" y2=\"" << base << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << left - 6 << "\" y=\"44\" text-anchor=\"end\">" << std::fixed << std::setprecision(1)
    << top_value << "%</text>\n";
  for (std::size_t t = 0; t < transitions.size(); ++t) {
    const int gx = left + static_cast<int>(t) * group + 12;
    for (const auto& r : rows) {
      if (r.transition != transitions[t]) continue;
      const int k = static_cast<int>(r.subspace);
      const int h = static_cast<int>(std::lround(r.l2_pct / top_value * height));
      s << "<rect x=\"" << gx + k * bar << "\" y=\"" << base - h << "\" width=\"" << bar - 2 << "\" height=\"" << h
        << "\" fill=\"" << colors[k] << "\"/>\n";
    }
    s << "<text x=\"" << gx + 3 * bar / 2 << "\" y=\"" << base + 16 << "\" text-anchor=\"middle\">"
      << svg_escape(transitions[t]) << "</text>\n";
  }
  const int lx = left + static_cast<int>(transitions.size()) * group + 20;
  for (Subspace sub : kSubspaces) {
    const int k = static_cast<int>(sub);
    s << "<rect x=\"" << lx << "\" y=\"" << 50 + k * 18 << "\" width=\"12\" height=\"12\" fill=\"" << colors[k]
      << "\"/><text x=\"" << lx + 18 << "\" y=\"" << 60 + k * 18 << "\">" << to_string(sub) << " L2 %</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace

int cmd_report(const std::vector<fs::path>& runs, const fs::path& out, std::ostream& log) {
  if (runs.empty()) throw ConfigError("report needs at least one run directory");
  fs::create_directories(out);
  struct Row {
    std::string label, method;
    double v[8];
  };
  std::vector<Row> rows;
  std::vector<std::string> missing;
  std::ostringstream shifts;
  shifts << std::fixed << std::setprecision(3);
  for (const auto& run : runs) {
    std::string label = run.filename().string();
    if (label.empty()) label = run.parent_path().filename().string();
    try {
      const auto kv = read_keyvals(run / "summary.txt");
      Row r{label, kv.count("method") ? kv.at("method") : "?", {}};
      const char* keys[8] = {"standard_ap_mean", "standard_ap_std", "standard_af_mean", "standard_af_std",
                             "comp_ap_mean",     "comp_ap_std",     "comp_af_mean",     "comp_af_std"};
      for (int i = 0; i < 8; ++i) r.v[i] = number(kv, keys[i]);
      rows.push_back(r);
    } catch (const std::exception& e) {
      missing.push_back(label + ": summary.txt (" + e.what() + ")");
      continue;
    }
    const auto dir = first_run_dir(run);
    if (!dir) {
      missing.push_back(label + ": no seed directories");
      continue;
    }
    for (const char* split : {"standard", "comp"}) {
      const fs::path p = *dir / ("matrix_" + std::string(split) + ".csv");
      std::ifstream in(p);
      if (!in) {
        missing.push_back(label + ": " + p.filename().string());
        continue;
      }
      std::vector<std::string> names;
      const auto m = read_matrix_csv(in, split, &names);
      std::ofstream csv(out / (label + "_matrix_" + split + ".csv"), std::ios::binary);
      write_matrix_csv(csv, m, names);
      write_text(out / (label + "_heatmap_" + split + ".svg"),
                 heatmap_svg(m, names, label + " (" + split + " accuracy, %)"));
    }
    std::ifstream sin(*dir / "shift.csv");
    if (!sin) {
      missing.push_back(label + ": shift.csv");
      continue;
    }
    const auto srows = read_shift_csv(sin);
    std::ofstream scsv(out / (label + "_shift.csv"), std::ios::binary);
    write_shift_csv(scsv, srows);
    write_text(out / (label + "_shift.svg"), shift_svg(srows, label + ": relative L2 shift per subspace"));
    shifts << "  " << label << ":";
    for (Subspace sub : kSubspaces) {
      double total = 0;
      std::size_t n = 0;
      for (const auto& r : srows) {
        if (r.subspace == sub) {
          total += r.l2_pct;
          ++n;
        }
      }
      shifts << ' ' << to_string(sub) << ' ' << (n ? total / static_cast<double>(n) : 0.0) << '%';
    }
    shifts << '\n';
  }

  std::ostringstream rep;
  rep << std::fixed << std::setprecision(2);
  rep << "AP / AF, mean +- std over seeds; deltas against " << (rows.empty() ? "-" : rows.front().label) << "\n\n";
  for (int split = 0; split < 2; ++split) {
    rep << (split == 0 ? "standard" : "comp") << '\n';
    rep << "  " << std::left << std::setw(24) << "run" << std::setw(10) << "method" << std::right << std::setw(18)
        << "AP" << std::setw(18) << "AF" << std::setw(10) << "dAP" << std::setw(10) << "dAF" << '\n';
    for (const auto& r : rows) {
      const double* v = r.v + split * 4;
      const double* b = rows.front().v + split * 4;
      std::ostringstream ap, af;
      ap << std::fixed << std::setprecision(2) << v[0] << " +- " << v[1];
      af << std::fixed << std::setprecision(2) << v[2] << " +- " << v[3];
      rep << "  " << std::left << std::setw(24) << r.label << std::setw(10) << r.method << std::right
          << std::setw(18) << ap.str() << std::setw(18) << af.str() << std::setw(10) << v[0] - b[0] << std::setw(10)
          << v[2] - b[2] << '\n';
    }
    rep << '\n';
  }
  rep << "mean relative L2 shift per subspace (first seed)\n" << shifts.str();
  if (!missing.empty()) {
    rep << "\nmissing artifacts\n";
    for (const auto& m : missing) rep << "  " << m << '\n';
  }
  write_text(out / "report.txt", rep.str());
  log << rep.str();
  return rows.empty() ? 1 : 0;
}

int report_error(const std::exception& e, std::ostream& err) {
  err << "error: " << e.what() << '\n';
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const SpecError*>(&e)) return 2;
  return 1;
}

}  // namespace aim::app
