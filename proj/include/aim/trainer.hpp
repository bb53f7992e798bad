#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aim/fisher.hpp"
#include "aim/masking.hpp"
#include "aim/memory.hpp"
#include "aim/metrics.hpp"
#include "aim/model.hpp"
#include "aim/tasks.hpp"

namespace aim {

enum class Method { kVanilla, kEwc, kEr, kAim };
enum class Optimizer { kSgd, kAdamw };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);
std::string_view to_string(Optimizer o);
Optimizer parse_optimizer(std::string_view name);

struct MethodConfig {
  Method method = Method::kVanilla;
  MaskVariant variant = MaskVariant::kAim;
  Aggregation aggregation = Aggregation::kMax;
  MaskConfig ratios;
  double ewc_lambda = 100.0;
  bool ewc_running_sum = false;
  // Replay capacity; used by er and aim only.
  std::size_t memory = 200;
  double replay_weight = 1.0;
  std::size_t replay_batch = 0;  // 0: same as batch_size
  std::size_t epochs = 3;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  Optimizer optimizer = Optimizer::kSgd;
  double weight_decay = 0.01;
  std::size_t fisher_samples = 500;
  std::uint64_t seed = 0;
  bool parallel = true;

  void validate() const;
  bool uses_replay() const { return (method == Method::kEr || method == Method::kAim) && memory > 0; }
  MaskConfig effective_ratios() const { return mask_variant(ratios, variant); }
};

// SGD or AdamW over a flat parameter vector. Entries with mask 0 are left
// untouched: no moment update, no decay, no parameter change.
class MaskedOptimizer {
 public:
  MaskedOptimizer(Optimizer kind, double lr, double weight_decay, std::size_t size);

  void step(std::span<double> params, std::span<const double> grads, std::span<const std::uint8_t> mask = {});
  std::size_t steps() const { return t_; }

 private:
  Optimizer kind_;
  double lr_, weight_decay_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

struct EwcAnchor {
  std::vector<double> theta;
  std::vector<double> fisher;
};

struct Penalty {
  double value = 0.0;
  std::vector<double> grad;
};

// lambda * sum over anchors and i of F_i (theta_i - anchor_i)^2, with its gradient.
Penalty ewc_penalty(std::span<const double> theta, std::span<const EwcAnchor> anchors, double lambda);

struct TrainState {
  TrainState(const ModelConfig& model_cfg, const MethodConfig& cfg);

  ToyVLM model;
  FisherState fisher;
  std::optional<MaskSet> masks;
  ReplayBuffer buffer;
  std::vector<EwcAnchor> anchors;
  std::size_t k = 0;  // completed tasks
  std::size_t step = 0;
};

struct LogRecord {
  std::size_t task = 0;
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  std::string method;
};

using LogFn = std::function<void(const LogRecord&)>;

// Trains one task. `completed` holds the datasets already trained on (for replay).
void train_task(TrainState& state, const TaskDataset& task, std::span<const TaskDataset> completed,
                const MethodConfig& cfg, const LogFn& log = {});

// Exact-match accuracy in percent; argmax ties go to the lowest class.
double evaluate_serial(const ToyVLM& model, std::span<const Sample> samples);
double evaluate_parallel(const ToyVLM& model, std::span<const Sample> samples);
std::size_t argmax(std::span<const double> logits);

struct TaskEnd {
  std::size_t position = 0;  // 0-based position in the training order
  const TaskDataset* task = nullptr;
  const TrainState* state = nullptr;
  std::span<const double> params;
};

struct RunHooks {
  LogFn log;
  std::function<void(const TaskEnd&)> on_task_end;
};

struct RunResult {
  AccuracyMatrix standard;
  AccuracyMatrix comp;
  std::vector<std::string> task_names;
  std::vector<ShiftRow> shifts;
  std::vector<std::array<double, 3>> fisher_means;  // aggregated Fisher per subspace after each task
  std::vector<std::vector<double>> snapshots;       // parameters at init and after each task
  std::vector<double> final_params;
  std::vector<MaskSet> masks;  // after each task (aim only)
};

ModelConfig model_config_for(const Stream& stream, ModelConfig base);

RunResult run_sequence(const Stream& stream, const ModelConfig& model_cfg, const MethodConfig& cfg,
                       const RunHooks& hooks = {});

}  // namespace aim
