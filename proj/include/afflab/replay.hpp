#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <vector>

#include "afflab/affordance.hpp"
#include "afflab/heightmap.hpp"
#include "afflab/random.hpp"

namespace afflab {

struct Transition {
  std::shared_ptr<const Heightmap> map;  // normalized on use with the run's stats
  Action action;
  int label = 0;
  double priority = 1.0;
};

inline constexpr double kPriorityFloor = 1e-3;

/// FIFO ring with proportional prioritized sampling, P(i) ∝ priority_i^alpha.
/// Entries are addressed by a stable id (the push counter): ids of evicted
/// entries are rejected with BadIndex.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 2000, double alpha = 0.6);

  /// Stores t with priority = max live priority (1.0 when empty); returns its id.
  std::uint64_t push(Transition t);

  std::vector<std::uint64_t> sample(std::size_t n, Rng& rng) const;

  /// priority = |td_error| + kPriorityFloor.
  void update_priority(std::uint64_t id, double td_error);

  const Transition& at(std::uint64_t id) const;

  /// Normalized sampling probabilities of the live entries, oldest first.
  std::vector<double> sampling_weights() const;

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t capacity() const noexcept { return capacity_; }
  double alpha() const noexcept { return alpha_; }
  std::uint64_t first_id() const noexcept { return first_id_; }
  std::uint64_t end_id() const noexcept { return first_id_ + entries_.size(); }

  // "ARB1" container: magic, capacity (u64), alpha (f64), first id (u64),
  // count (u64), then per entry: pixel row/col, angle index, frame row/col
  // (u32 each), value (f64), label (u8), priority (f64) and an embedded
  // AHM1 heightmap.
  void save(const std::filesystem::path& path) const;
  static ReplayBuffer load(const std::filesystem::path& path);

 private:
  std::size_t slot(std::uint64_t id) const;

  std::size_t capacity_;
  double alpha_;
  std::uint64_t first_id_ = 0;
  std::deque<Transition> entries_;
};

}  // namespace afflab
