#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "aim/registry.hpp"
#include "aim/sample.hpp"
#include "aim/tape.hpp"

namespace aim {

struct ModelConfig {
  std::size_t region_count = 8;
  std::size_t feature_dim = 16;
  std::size_t shared_dim = 32;
  std::size_t vocab_size = 256;
  std::size_t question_len = 4;
  std::size_t shared_layers = 2;
  std::size_t text_layers = 2;
  std::size_t answer_classes = 24;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the offending field.
  void validate() const;
  // FNV-1a over the architecture fields (seed excluded); stored in checkpoints.
  std::uint64_t digest() const;
};

struct LossAndGrads {
  double loss = 0.0;
  std::vector<double> grads;  // registry flat order
};

// Toy vision-language classifier:
//   vis:    relu(regions * W + b), mean over regions        (d_v -> d)
//   text:   embedding lookup, mean over question tokens     (V x d)
//   shared: fusion MLP over [pooled visual, pooled question] (2d -> d -> ... -> d)
//   text:   reasoning MLP d -> d, then classifier head d -> K
// Parameter names carry their subspace as prefix ("vis.", "shared.", "text.").
class ToyVLM {
 public:
  explicit ToyVLM(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ParamRegistry& registry() { return registry_; }
  const ParamRegistry& registry() const { return registry_; }

  std::vector<double> forward(const Sample& sample) const;
  // Logits [B x K] for a batch, row order preserved.
  diff::Tensor forward_batch(std::span<const Sample* const> batch) const;

  // Mean cross-entropy over `task` plus replay_weight * mean cross-entropy over
  // `replay` (skipped when empty). Gradients are returned in registry order
  // and, with ParamGrads::kWrite, also written into the registry grad slots.
  LossAndGrads loss_and_grads(std::span<const Sample* const> task,
                              std::span<const Sample* const> replay = {},
                              double replay_weight = 1.0,
                              diff::ParamGrads mode = diff::ParamGrads::kWrite);
  LossAndGrads loss_and_grads(std::span<const Sample> batch);
  // Gradients only, never touching the registry; safe to call concurrently.
  LossAndGrads sample_gradients(const Sample& sample) const;

  double loss(std::span<const Sample> batch) const;

  void validate_sample(const Sample& sample) const;

 private:
  struct Vars {
    diff::Var vis_w, vis_b;
    std::vector<diff::Var> shared_w, shared_b;
    diff::Var embed;
    std::vector<diff::Var> text_w, text_b;
    diff::Var head_w, head_b;
  };

  Vars bind(diff::Tape& tape) const;
  diff::Var logits(diff::Tape& tape, const Vars& vars, std::span<const Sample* const> batch) const;
  LossAndGrads run(std::span<const Sample* const> task, std::span<const Sample* const> replay,
                   double replay_weight) const;

  ModelConfig config_;
  ParamRegistry registry_;
  std::size_t vis_w_ = 0, vis_b_ = 0, embed_ = 0, head_w_ = 0, head_b_ = 0;
  std::vector<std::size_t> shared_w_, shared_b_, text_w_, text_b_;
};

std::vector<const Sample*> pointers(std::span<const Sample> samples);

}  // namespace aim
