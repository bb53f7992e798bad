#include "aim/memory.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "aim/error.hpp"

namespace aim {

std::vector<std::size_t> allocate_quotas(std::size_t capacity, std::span<const std::size_t> available) {
  std::vector<std::size_t> quota(available.size(), 0);
  std::vector<bool> fixed(available.size(), false);
  std::size_t remaining = capacity;
  for (;;) {
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < available.size(); ++i) {
      if (!fixed[i]) open.push_back(i);
    }
    if (open.empty() || remaining == 0) break;
    const std::size_t share = remaining / open.size();
    const std::size_t extra = remaining % open.size();
    bool saturated = false;
    for (std::size_t j = 0; j < open.size(); ++j) {
      const std::size_t i = open[j];
      const std::size_t want = share + (j < extra ? 1 : 0);
      if (available[i] <= want) {
        quota[i] = available[i];
        fixed[i] = true;
        remaining -= available[i];
        saturated = true;
      }
    }
    if (saturated) continue;
    for (std::size_t j = 0; j < open.size(); ++j) quota[open[j]] = share + (j < extra ? 1 : 0);
    break;
  }
  return quota;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed)
    : capacity_(capacity), seed_(seed), rng_(derive_seed(seed, "replay")) {}

void ReplayBuffer::clear() { entries_.clear(); }

void ReplayBuffer::populate(std::span<const TaskDataset> completed) {
  entries_.clear();
  rng_ = Rng(derive_seed(seed_, "replay", completed.size()));
  if (capacity_ == 0 || completed.empty()) return;
  std::vector<std::size_t> available;
  for (const auto& t : completed) available.push_back(t.train.size());
  const auto quota = allocate_quotas(capacity_, available);
  Rng pick(derive_seed(seed_, "populate", completed.size()));
  for (std::size_t t = 0; t < completed.size(); ++t) {
    const auto& train = completed[t].train;
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < quota[t]; ++i) {
      const std::size_t j = i + pick.below(idx.size() - i);
      std::swap(idx[i], idx[j]);
      entries_.push_back({completed[t].task_id, train[idx[i]]});
    }
  }
  if (entries_.size() > capacity_) throw ContractError("replay buffer exceeded its capacity");
}

std::vector<const Sample*> ReplayBuffer::sample_batch(std::size_t b) {
  if (entries_.empty()) throw ContractError("sampling from an empty replay buffer");
  if (b == 0) throw ContractError("replay batch size must be >= 1");
  std::vector<const Sample*> out;
  out.reserve(b);
  if (b > entries_.size()) {
    for (std::size_t i = 0; i < b; ++i) out.push_back(&entries_[rng_.below(entries_.size())].sample);
    return out;
  }
  std::vector<std::size_t> idx(entries_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t j = i + rng_.below(idx.size() - i);
    std::swap(idx[i], idx[j]);
    out.push_back(&entries_[idx[i]].sample);
  }
  return out;
}

std::vector<std::size_t> ReplayBuffer::per_task_counts(std::size_t num_tasks) const {
  std::vector<std::size_t> counts(num_tasks, 0);
  for (const auto& e : entries_) {
    if (e.task_id >= 0 && static_cast<std::size_t>(e.task_id) < num_tasks) ++counts[static_cast<std::size_t>(e.task_id)];
  }
  return counts;
}

Stream ReplayBuffer::dump(const SampleLayout& layout) const {
  Stream out;
  out.layout = layout;
  std::map<int, std::size_t> slot;
  for (const auto& e : entries_) {
    auto [it, inserted] = slot.try_emplace(e.task_id, out.tasks.size());
    if (inserted) {
      TaskDataset t;
      t.task_id = e.task_id;
      t.skill = e.sample.skill;
      out.tasks.push_back(std::move(t));
    }
    out.tasks[it->second].train.push_back(e.sample);
  }
  return out;
}

}  // namespace aim
