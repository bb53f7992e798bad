#include "aim/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aim/error.hpp"
#include "aim/kernels.hpp"
#include "aim/rng.hpp"

namespace aim {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kVanilla:
      return "vanilla";
    case Method::kEwc:
      return "ewc";
    case Method::kEr:
      return "er";
    case Method::kAim:
      return "aim";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "vanilla") return Method::kVanilla;
  if (name == "ewc") return Method::kEwc;
  if (name == "er") return Method::kEr;
  if (name == "aim") return Method::kAim;
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

std::string_view to_string(Optimizer o) { return o == Optimizer::kSgd ? "sgd" : "adamw"; }

Optimizer parse_optimizer(std::string_view name) {
  if (name == "sgd") return Optimizer::kSgd;
  if (name == "adamw") return Optimizer::kAdamw;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

void MethodConfig::validate() const {
  ratios.validate();
  if (!(ewc_lambda >= 0.0) || !std::isfinite(ewc_lambda)) throw ConfigError("method.ewc_lambda must be >= 0");
  if (epochs < 1) throw ConfigError("method.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("method.batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("method.lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("method.weight_decay must be >= 0");
  if (!(replay_weight >= 0.0)) throw ConfigError("method.replay_weight must be >= 0");
  if (fisher_samples < 1) throw ConfigError("method.fisher_samples must be >= 1");
}

MaskedOptimizer::MaskedOptimizer(Optimizer kind, double lr, double weight_decay, std::size_t size)
    : kind_(kind), lr_(lr), weight_decay_(weight_decay) {
  if (kind_ == Optimizer::kAdamw) {
    m_.assign(size, 0.0);
    v_.assign(size, 0.0);
  }
}

void MaskedOptimizer::step(std::span<double> params, std::span<const double> grads,
                           std::span<const std::uint8_t> mask) {
  if (params.size() != grads.size()) throw ContractError("gradient length does not match the parameters");
  if (!mask.empty() && mask.size() != params.size()) throw ContractError("mask length does not match the parameters");
  ++t_;
  const std::size_t n = params.size();
  if (kind_ == Optimizer::kSgd) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask.empty() && mask[i] == 0) continue;
      params[i] -= lr_ * grads[i];
    }
    return;
  }
  if (m_.size() != n) throw ContractError("optimizer was built for a different parameter count");
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.empty() && mask[i] == 0) continue;
    const double g = grads[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * params[i]);
  }
}

Penalty ewc_penalty(std::span<const double> theta, std::span<const EwcAnchor> anchors, double lambda) {
  if (anchors.empty()) throw ContractError("EWC penalty needs at least one anchor");
  Penalty p;
  p.grad.assign(theta.size(), 0.0);
  for (const auto& a : anchors) {
    if (a.theta.size() != theta.size() || a.fisher.size() != theta.size()) {
      throw ContractError("EWC anchor length does not match the parameters");
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double d = theta[i] - a.theta[i];
      p.value += a.fisher[i] * d * d;
      p.grad[i] += 2.0 * a.fisher[i] * d;
    }
  }
  p.value *= lambda;
  for (double& g : p.grad) g *= lambda;
  return p;
}

TrainState::TrainState(const ModelConfig& model_cfg, const MethodConfig& cfg)
    : model(model_cfg), buffer(cfg.uses_replay() ? cfg.memory : 0, derive_seed(cfg.seed, "memory")) {}

void train_task(TrainState& state, const TaskDataset& task, std::span<const TaskDataset> completed,
                const MethodConfig& cfg, const LogFn& log) {
  if (task.train.empty()) throw ContractError("training on an empty dataset");
  const std::size_t position = state.k;
  if (cfg.uses_replay()) state.buffer.populate(completed);

  auto& registry = state.model.registry();
  const std::size_t dim = registry.total_size();
  MaskedOptimizer opt(cfg.optimizer, cfg.lr, cfg.weight_decay, dim);
  const bool masking = cfg.method == Method::kAim && state.masks.has_value() && position > 0;
  const bool ewc = cfg.method == Method::kEwc && !state.anchors.empty();
  const std::size_t replay_b = cfg.replay_batch == 0 ? cfg.batch_size : cfg.replay_batch;
  std::span<const std::uint8_t> mask;
  if (masking) mask = state.masks->mask;

  std::vector<std::size_t> order(task.train.size());
  std::vector<double> params = registry.flat_values();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(cfg.seed, "shuffle", position, epoch));
    shuffle.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const Sample*> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(&task.train[order[i]]);
      std::vector<const Sample*> replay;
      if (cfg.uses_replay() && !state.buffer.empty()) replay = state.buffer.sample_batch(replay_b);

      auto lg = state.model.loss_and_grads(batch, replay, cfg.replay_weight, diff::ParamGrads::kKeep);
      double loss = lg.loss;
      if (ewc) {
        auto pen = ewc_penalty(params, state.anchors, cfg.ewc_lambda);
        loss += pen.value;
        for (std::size_t i = 0; i < dim; ++i) lg.grads[i] += pen.grad[i];
      }
      if (!std::isfinite(loss)) throw TrainingError(state.step, "loss is not finite");
      if (masking) apply_mask(lg.grads, mask);
      opt.step(params, lg.grads, mask);
      registry.set_flat_values(params);
      epoch_loss += loss;
      ++batches;
      ++state.step;
    }
    if (log) log({position, epoch, state.step, epoch_loss / static_cast<double>(batches), std::string(to_string(cfg.method))});
  }
}

std::size_t argmax(std::span<const double> logits) {
  if (logits.empty()) throw ContractError("argmax of nothing");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

namespace {

constexpr std::size_t kEvalChunk = 128;

std::size_t correct_in_chunk(const ToyVLM& model, std::span<const Sample> samples, std::size_t start) {
  const std::size_t end = std::min(samples.size(), start + kEvalChunk);
  std::vector<const Sample*> ptrs;
  for (std::size_t i = start; i < end; ++i) ptrs.push_back(&samples[i]);
  const auto logits = model.forward_batch(ptrs);
  const std::size_t k = logits.cols();
  std::size_t correct = 0;
  for (std::size_t r = 0; r < ptrs.size(); ++r) {
    const auto row = logits.data().subspan(r * k, k);
    if (static_cast<int>(argmax(row)) == ptrs[r]->answer) ++correct;
  }
  return correct;
}

double percent(std::size_t correct, std::size_t total) {
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

double evaluate_serial(const ToyVLM& model, std::span<const Sample> samples) {
  if (samples.empty()) throw ContractError("evaluating an empty split");
  std::size_t correct = 0;
  for (std::size_t start = 0; start < samples.size(); start += kEvalChunk) {
    correct += correct_in_chunk(model, samples, start);
  }
  return percent(correct, samples.size());
}

double evaluate_parallel(const ToyVLM& model, std::span<const Sample> samples) {
  if (samples.empty()) throw ContractError("evaluating an empty split");
  const auto chunks = static_cast<std::int64_t>((samples.size() + kEvalChunk - 1) / kEvalChunk);
  std::size_t correct = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : correct) if (kernels::max_threads() > 1)
  for (std::int64_t c = 0; c < chunks; ++c) {
    correct += correct_in_chunk(model, samples, static_cast<std::size_t>(c) * kEvalChunk);
  }
  return percent(correct, samples.size());
}

ModelConfig model_config_for(const Stream& stream, ModelConfig base) {
  base.region_count = stream.layout.region_count;
  base.feature_dim = stream.layout.feature_dim;
  base.question_len = stream.layout.question_len;
  return base;
}

RunResult run_sequence(const Stream& stream, const ModelConfig& model_cfg, const MethodConfig& cfg,
                       const RunHooks& hooks) {
  if (stream.tasks.empty()) throw ContractError("empty task stream");
  cfg.validate();
  const auto& layout = stream.layout;
  if (model_cfg.region_count != layout.region_count || model_cfg.feature_dim != layout.feature_dim ||
      model_cfg.question_len != layout.question_len) {
    throw ConfigError("model layout does not match the stream layout");
  }
  const std::size_t n = stream.tasks.size();
  TrainState state(model_cfg, cfg);
  auto& registry = state.model.registry();

  RunResult result;
  result.standard = AccuracyMatrix(n, "standard");
  result.comp = AccuracyMatrix(n, "comp");
  for (const auto& t : stream.tasks) {
    result.task_names.emplace_back(skill_catalogue().at(static_cast<std::size_t>(t.skill)).name);
  }
  result.snapshots.push_back(registry.flat_values());

  auto evaluate = [&](std::span<const Sample> s) {
    return cfg.parallel ? evaluate_parallel(state.model, s) : evaluate_serial(state.model, s);
  };

  for (std::size_t k = 0; k < n; ++k) {
    const auto& task = stream.tasks[k];
    train_task(state, task, std::span(stream.tasks).first(k), cfg, hooks.log);

    const auto per_task = estimate_fisher(state.model, task.train, cfg.fisher_samples,
                                          derive_seed(cfg.seed, "fisher", k), cfg.parallel);
    aggregate(state.fisher, per_task, cfg.aggregation);
    state.fisher.samples = cfg.fisher_samples;
    if (cfg.method == Method::kAim) {
      state.masks = generate_masks(state.fisher.aggregated, registry, cfg.effective_ratios());
      result.masks.push_back(*state.masks);
    }
    state.k = k + 1;

    for (std::size_t i = 0; i <= k; ++i) {
      result.standard.set(i, k, evaluate(stream.tasks[i].standard_test));
      result.comp.set(i, k, evaluate(stream.tasks[i].comp_test));
    }

    auto params = registry.flat_values();
    if (cfg.method == Method::kEwc) {
      if (cfg.ewc_running_sum && !state.anchors.empty()) {
        auto& a = state.anchors.front();
        a.theta = params;
        for (std::size_t i = 0; i < per_task.size(); ++i) a.fisher[i] += per_task[i];
      } else {
        state.anchors.push_back({params, per_task});
      }
    }
    const std::string from = k == 0 ? "init" : "T" + std::to_string(k);
    auto rows = shift_rows(from + "->T" + std::to_string(k + 1), params, result.snapshots.back(), per_task, registry);
    result.shifts.insert(result.shifts.end(), rows.begin(), rows.end());
    result.fisher_means.push_back(fisher_summary(state.fisher.aggregated, registry));
    result.snapshots.push_back(params);
    if (hooks.on_task_end) hooks.on_task_end({k, &task, &state, result.snapshots.back()});
  }
  result.final_params = result.snapshots.back();
  return result;
}

}  // namespace aim
