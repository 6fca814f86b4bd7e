#include "afflab/replay.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "afflab/binary_io.hpp"
#include "afflab/error.hpp"

namespace afflab {

ReplayBuffer::ReplayBuffer(std::size_t capacity, double alpha) : capacity_(capacity), alpha_(alpha) {
  if (capacity == 0) throw Error(ErrorCode::kInvalidArgument, "replay capacity must be >= 1");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(ErrorCode::kInvalidArgument, "replay alpha must be >= 0");
}

std::uint64_t ReplayBuffer::push(Transition t) {
  if (!t.map) throw Error(ErrorCode::kInvalidArgument, "transition without a heightmap");
  if (t.label != 0 && t.label != 1) throw Error(ErrorCode::kInvalidArgument, "transition label must be 0 or 1");
  double priority = 1.0;
  if (!entries_.empty()) {
    priority = 0.0;
    for (const auto& e : entries_) priority = std::max(priority, e.priority);
  }
  t.priority = priority;
  entries_.push_back(std::move(t));
  if (entries_.size() > capacity_) {
    entries_.pop_front();
    ++first_id_;
  }
  return end_id() - 1;
}

std::vector<double> ReplayBuffer::sampling_weights() const {
  std::vector<double> w(entries_.size());
  double total = 0.0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    w[i] = alpha_ == 0.0 ? 1.0 : std::pow(entries_[i].priority, alpha_);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

std::vector<std::uint64_t> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (entries_.empty()) throw Error(ErrorCode::kEmptyBuffer, "cannot sample from an empty replay buffer");
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "sample size must be >= 1");
  const auto w = sampling_weights();
  std::vector<double> cumulative(w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) cumulative[i] = (acc += w[i]);
  std::vector<std::uint64_t> ids;
  ids.reserve(n);
  for (std::size_t draw = 0; draw < n; ++draw) {
    const double r = uniform01(rng) * acc;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), w.size() - 1);
    ids.push_back(first_id_ + i);
  }
  return ids;
}

std::size_t ReplayBuffer::slot(std::uint64_t id) const {
  if (id < first_id_ || id >= end_id())
    throw Error(ErrorCode::kBadIndex, "replay id " + std::to_string(id) + " is not live");
  return static_cast<std::size_t>(id - first_id_);
}

void ReplayBuffer::update_priority(std::uint64_t id, double td_error) {
  const std::size_t i = slot(id);
  if (!std::isfinite(td_error)) throw Error(ErrorCode::kInvalidArgument, "non-finite td error");
  entries_[i].priority = std::abs(td_error) + kPriorityFloor;
}

const Transition& ReplayBuffer::at(std::uint64_t id) const { return entries_[slot(id)]; }

void ReplayBuffer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  BinaryWriter w(out);
  w.magic("ARB1");
  w.u64(capacity_);
  w.f64(alpha_);
  w.u64(first_id_);
  w.u64(entries_.size());
  for (const auto& e : entries_) {
    w.u32(static_cast<std::uint32_t>(e.action.pixel[0]));
    w.u32(static_cast<std::uint32_t>(e.action.pixel[1]));
    w.u32(static_cast<std::uint32_t>(e.action.angle_index));
    w.u32(static_cast<std::uint32_t>(e.action.frame_pixel[0]));
    w.u32(static_cast<std::uint32_t>(e.action.frame_pixel[1]));
    w.f64(e.action.value);
    w.u8(static_cast<std::uint8_t>(e.label));
    w.f64(e.priority);
    write_heightmap(out, *e.map);
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

ReplayBuffer ReplayBuffer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  BinaryReader r(in, ErrorCode::kIo);
  r.expect_magic("ARB1");
  const auto capacity = r.u64();
  const double alpha = r.f64();
  ReplayBuffer buf(static_cast<std::size_t>(capacity), alpha);
  buf.first_id_ = r.u64();
  const auto count = r.u64();
  if (count > capacity) throw Error(ErrorCode::kIo, "replay dump holds more entries than its capacity");
  for (std::uint64_t i = 0; i < count; ++i) {
    Transition t;
    t.action.pixel = {static_cast<int>(r.u32()), static_cast<int>(r.u32())};
    t.action.angle_index = static_cast<int>(r.u32());
    t.action.frame_pixel = {static_cast<int>(r.u32()), static_cast<int>(r.u32())};
    t.action.value = r.f64();
    t.label = r.u8();
    t.priority = r.f64();
    t.map = std::make_shared<const Heightmap>(read_heightmap(in));
    buf.entries_.push_back(std::move(t));
  }
  return buf;
}

}  // namespace afflab
