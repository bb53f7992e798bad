#include "aim/model.hpp"

#include <cmath>
#include <string>

#include "aim/error.hpp"
#include "aim/rng.hpp"

namespace aim {

using diff::ParamGrads;
using diff::Tape;
using diff::Tensor;
using diff::Var;

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* field) {
    if (v < 1) throw ConfigError(std::string("model.") + field + " must be >= 1");
  };
  positive(region_count, "regions");
  positive(feature_dim, "feature_dim");
  positive(shared_dim, "shared_dim");
  positive(vocab_size, "vocab_size");
  positive(question_len, "question_len");
  positive(shared_layers, "shared_layers");
  positive(text_layers, "text_layers");
  if (answer_classes < 2) throw ConfigError("model.answer_classes must be >= 2");
}

std::uint64_t ModelConfig::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint64_t v : {std::uint64_t{region_count}, std::uint64_t{feature_dim},
                          std::uint64_t{shared_dim}, std::uint64_t{vocab_size},
                          std::uint64_t{question_len}, std::uint64_t{shared_layers},
                          std::uint64_t{text_layers}, std::uint64_t{answer_classes}}) {
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (v >> (8 * byte)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

ToyVLM::ToyVLM(const ModelConfig& config) : config_(config) {
  config_.validate();
  const std::size_t dv = config_.feature_dim, d = config_.shared_dim;

  vis_w_ = registry_.add("vis.proj.weight", {dv, d}, Subspace::kVis);
  vis_b_ = registry_.add("vis.proj.bias", {d}, Subspace::kVis);
  for (std::size_t l = 0; l < config_.shared_layers; ++l) {
    const std::size_t in = l == 0 ? 2 * d : d;
    shared_w_.push_back(registry_.add("shared.fuse" + std::to_string(l) + ".weight", {in, d}, Subspace::kShared));
    shared_b_.push_back(registry_.add("shared.fuse" + std::to_string(l) + ".bias", {d}, Subspace::kShared));
  }
  embed_ = registry_.add("text.embed", {config_.vocab_size, d}, Subspace::kText);
  for (std::size_t l = 0; l < config_.text_layers; ++l) {
    text_w_.push_back(registry_.add("text.mlp" + std::to_string(l) + ".weight", {d, d}, Subspace::kText));
    text_b_.push_back(registry_.add("text.mlp" + std::to_string(l) + ".bias", {d}, Subspace::kText));
  }
  head_w_ = registry_.add("text.head.weight", {d, config_.answer_classes}, Subspace::kText);
  head_b_ = registry_.add("text.head.bias", {config_.answer_classes}, Subspace::kText);

  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the embedding is a lookup on a one-hot
  // input, so its fan-in is 1.
  Rng rng(derive_seed(config_.seed, "init"));
  auto fill = [&](std::size_t index, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : registry_.at(index).tensor.data()) v = rng.uniform(-bound, bound);
  };
  fill(vis_w_, dv);
  fill(vis_b_, dv);
  for (std::size_t l = 0; l < shared_w_.size(); ++l) {
    const std::size_t in = l == 0 ? 2 * d : d;
    fill(shared_w_[l], in);
    fill(shared_b_[l], in);
  }
  fill(embed_, 1);
  for (std::size_t l = 0; l < text_w_.size(); ++l) {
    fill(text_w_[l], d);
    fill(text_b_[l], d);
  }
  fill(head_w_, d);
  fill(head_b_, d);
  registry_.zero_grads();

  if (auto problem = registry_.audit(); !problem.empty()) throw ContractError("registry audit: " + problem);
}

void ToyVLM::validate_sample(const Sample& sample) const {
  const std::size_t want = config_.region_count * config_.feature_dim;
  if (sample.regions.size() != want) {
    throw InputError("sample has " + std::to_string(sample.regions.size()) + " region values, expected " +
                     std::to_string(want));
  }
  if (sample.question.size() != config_.question_len) {
    throw InputError("question has " + std::to_string(sample.question.size()) + " tokens, expected " +
                     std::to_string(config_.question_len));
  }
  for (int id : sample.question) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw InputError("token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(config_.vocab_size));
    }
  }
}

ToyVLM::Vars ToyVLM::bind(Tape& tape) const {
  const auto& r = registry_;
  Vars v;
  v.vis_w = tape.parameter(r.at(vis_w_).tensor);
  v.vis_b = tape.parameter(r.at(vis_b_).tensor);
  for (std::size_t l = 0; l < shared_w_.size(); ++l) {
    v.shared_w.push_back(tape.parameter(r.at(shared_w_[l]).tensor));
    v.shared_b.push_back(tape.parameter(r.at(shared_b_[l]).tensor));
  }
  v.embed = tape.parameter(r.at(embed_).tensor);
  for (std::size_t l = 0; l < text_w_.size(); ++l) {
    v.text_w.push_back(tape.parameter(r.at(text_w_[l]).tensor));
    v.text_b.push_back(tape.parameter(r.at(text_b_[l]).tensor));
  }
  v.head_w = tape.parameter(r.at(head_w_).tensor);
  v.head_b = tape.parameter(r.at(head_b_).tensor);
  return v;
}

Var ToyVLM::logits(Tape& tape, const Vars& vars, std::span<const Sample* const> batch) const {
  const std::size_t b = batch.size(), r = config_.region_count, dv = config_.feature_dim;
  const std::size_t t = config_.question_len;
  Tensor regions({b * r, dv});
  std::vector<int> ids;
  ids.reserve(b * t);
  for (std::size_t i = 0; i < b; ++i) {
    const Sample& s = *batch[i];
    validate_sample(s);
    std::copy(s.regions.begin(), s.regions.end(),
              regions.data().begin() + static_cast<std::ptrdiff_t>(i * r * dv));
    ids.insert(ids.end(), s.question.begin(), s.question.end());
  }

  Var x = tape.constant(std::move(regions));
  Var vis = tape.relu(tape.add_row_bias(tape.matmul(x, vars.vis_w), vars.vis_b));
  Var pooled_vis = tape.group_mean_pool(vis, r);
  Var words = tape.embedding(vars.embed, ids);
  Var pooled_words = tape.group_mean_pool(words, t);

  Var h = tape.concat_cols(pooled_vis, pooled_words);
  for (std::size_t l = 0; l < vars.shared_w.size(); ++l) {
    h = tape.relu(tape.add_row_bias(tape.matmul(h, vars.shared_w[l]), vars.shared_b[l]));
  }
  for (std::size_t l = 0; l < vars.text_w.size(); ++l) {
    h = tape.relu(tape.add_row_bias(tape.matmul(h, vars.text_w[l]), vars.text_b[l]));
  }
  return tape.add_row_bias(tape.matmul(h, vars.head_w), vars.head_b);
}

std::vector<double> ToyVLM::forward(const Sample& sample) const {
  const Sample* one[] = {&sample};
  Tensor out = forward_batch(one);
  return {out.data().begin(), out.data().end()};
}

Tensor ToyVLM::forward_batch(std::span<const Sample* const> batch) const {
  if (batch.empty()) throw ContractError("forward on an empty batch");
  Tape tape(ParamGrads::kKeep);
  Vars vars = bind(tape);
  return tape.value(logits(tape, vars, batch));
}

LossAndGrads ToyVLM::run(std::span<const Sample* const> task, std::span<const Sample* const> replay,
                         double replay_weight) const {
  if (task.empty()) throw ContractError("loss over an empty batch");
  Tape tape(ParamGrads::kKeep);
  Vars vars = bind(tape);

  auto batch_loss = [&](std::span<const Sample* const> batch) {
    std::vector<int> labels;
    labels.reserve(batch.size());
    for (const Sample* s : batch) labels.push_back(s->answer);
    return tape.softmax_cross_entropy(logits(tape, vars, batch), labels);
  };
  Var loss = batch_loss(task);
  if (!replay.empty()) {
    Var mem = batch_loss(replay);
    loss = tape.add(loss, replay_weight == 1.0 ? mem : tape.scale(mem, replay_weight));
  }
  tape.backward(loss);

  LossAndGrads out;
  out.loss = tape.value(loss).item();
  out.grads.assign(registry_.total_size(), 0.0);
  auto scatter = [&](Var v, std::size_t entry) {
    auto g = tape.grad(v);
    std::copy(g.begin(), g.end(), out.grads.begin() + static_cast<std::ptrdiff_t>(registry_.at(entry).offset));
  };
  scatter(vars.vis_w, vis_w_);
  scatter(vars.vis_b, vis_b_);
  for (std::size_t l = 0; l < shared_w_.size(); ++l) {
    scatter(vars.shared_w[l], shared_w_[l]);
    scatter(vars.shared_b[l], shared_b_[l]);
  }
  scatter(vars.embed, embed_);
  for (std::size_t l = 0; l < text_w_.size(); ++l) {
    scatter(vars.text_w[l], text_w_[l]);
    scatter(vars.text_b[l], text_b_[l]);
  }
  scatter(vars.head_w, head_w_);
  scatter(vars.head_b, head_b_);
  return out;
}

LossAndGrads ToyVLM::loss_and_grads(std::span<const Sample* const> task,
                                    std::span<const Sample* const> replay, double replay_weight,
                                    ParamGrads mode) {
  LossAndGrads out = run(task, replay, replay_weight);
  if (mode == ParamGrads::kWrite) registry_.set_flat_grads(out.grads);
  return out;
}

LossAndGrads ToyVLM::loss_and_grads(std::span<const Sample> batch) {
  auto ptrs = pointers(batch);
  return loss_and_grads(ptrs);
}

LossAndGrads ToyVLM::sample_gradients(const Sample& sample) const {
  const Sample* one[] = {&sample};
  return run(one, {}, 1.0);
}

double ToyVLM::loss(std::span<const Sample> batch) const {
  if (batch.empty()) throw ContractError("loss over an empty batch");
  auto ptrs = pointers(batch);
  Tape tape(ParamGrads::kKeep);
  Vars vars = bind(tape);
  std::vector<int> labels;
  for (const Sample& s : batch) labels.push_back(s.answer);
  return tape.value(tape.softmax_cross_entropy(logits(tape, vars, ptrs), labels)).item();
}

std::vector<const Sample*> pointers(std::span<const Sample> samples) {
  std::vector<const Sample*> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.push_back(&s);
  return out;
}

}  // namespace aim
