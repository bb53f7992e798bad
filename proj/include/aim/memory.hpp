#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "aim/rng.hpp"
#include "aim/sample.hpp"
#include "aim/tasks.hpp"

namespace aim {

struct MemoryEntry {
  int task_id = 0;
  Sample sample;
};

// Episodic replay buffer. populate() discards the contents and rebuilds them
// from the training splits of the completed tasks with equal per-task quotas.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::uint64_t seed);

  void populate(std::span<const TaskDataset> completed);
  void clear();

  // b distinct entries when b <= size(), otherwise b draws with replacement.
  std::vector<const Sample*> sample_batch(std::size_t b);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<MemoryEntry>& entries() const { return entries_; }
  std::vector<std::size_t> per_task_counts(std::size_t num_tasks) const;

  // Contents as a stream (one dataset per source task, samples in the train split).
  Stream dump(const SampleLayout& layout) const;

 private:
  std::size_t capacity_;
  std::uint64_t seed_;
  std::vector<MemoryEntry> entries_;
  Rng rng_;
};

// Per-task quotas for `capacity` slots over tasks with `available` samples each:
// equal shares with the remainder to the earliest tasks, and slots a task
// cannot fill passed on to the others.
std::vector<std::size_t> allocate_quotas(std::size_t capacity, std::span<const std::size_t> available);

}  // namespace aim
