#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "aim/trainer.hpp"
#include "json.hpp"

namespace aim::app {

struct SweepSpec {
  std::vector<std::size_t> memory{0, 50, 200, 1000};
  std::vector<MaskConfig> ratios;  // default: vis {.1,.3,.5} x text {.3,.5,.7}, shared .1
  std::vector<std::string> order{"default", "reverse", "random"};
  std::vector<Aggregation> aggregation{Aggregation::kMax, Aggregation::kSum};
  std::vector<MaskVariant> variant{MaskVariant::kAim, MaskVariant::kUniform, MaskVariant::kSwapped};
  SweepSpec();
};

// Everything a command needs. Each entry of `seeds` is the root seed of one
// run: it seeds the stream, the model and the method.
struct RunConfig {
  StreamSpec stream;
  std::string order = "default";  // named order; ignored when stream.order is explicit
  bool all_folds = false;
  ModelConfig model;
  MethodConfig method;
  std::vector<std::uint64_t> seeds{1};
  std::optional<std::filesystem::path> stream_file;
  SweepSpec sweep;

  void validate() const;
};

// Unknown keys and ill-typed values raise ConfigError.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

std::vector<std::uint64_t> parse_seed_list(const std::string& text);

// Stream for one root seed (and COMP fold), honoring stream_file and order.
Stream stream_for(const RunConfig& cfg, std::uint64_t seed, int fold);
ModelConfig model_for(const RunConfig& cfg, const Stream& stream, std::uint64_t seed);

struct SeedSummary {
  std::uint64_t seed = 0;
  double standard_ap = 0, standard_af = 0, comp_ap = 0, comp_af = 0;
  bool af_defined = false;
};

struct TrainSummary {
  std::string method;
  std::vector<SeedSummary> seeds;
};

void write_summary(const std::filesystem::path& path, const RunConfig& cfg, const TrainSummary& s);

// Commands return the process exit code: 0 ok, 1 runtime failure, 2 config error.
int cmd_gen(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_train(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log,
              TrainSummary* summary = nullptr);
int cmd_sweep(const RunConfig& cfg, const std::string& axis, const std::filesystem::path& out, std::ostream& log);
int cmd_report(const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out, std::ostream& log);

// Maps an exception to an exit code and prints it.
int report_error(const std::exception& e, std::ostream& err);

}  // namespace aim::app
