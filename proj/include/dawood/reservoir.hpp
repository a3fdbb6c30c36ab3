#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dawood/error.hpp"
#include "dawood/rng.hpp"

namespace dawood {

// Single-pass uniform sampler (Algorithm R): after n offers every item seen
// so far is held with probability min(1, capacity / n).
template <typename T>
class ReservoirSampler {
 public:
  ReservoirSampler(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
    if (capacity == 0) throw UsageError("reservoir capacity must be >= 1");
    items_.reserve(capacity);
  }

  void offer(T item) {
    ++seen_;
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
      return;
    }
    const auto j = rng_.below(seen_);
    if (j < capacity_) items_[j] = std::move(item);
  }

  std::uint64_t seen() const { return seen_; }
  std::size_t capacity() const { return capacity_; }
  const std::vector<T>& items() const& { return items_; }
  std::vector<T> take() && { return std::move(items_); }

 private:
  std::size_t capacity_;
  Rng rng_;
  std::uint64_t seen_ = 0;
  std::vector<T> items_;
};

template <typename Range>
auto reservoir_sample(const Range& stream, std::size_t capacity, std::uint64_t seed) {
  using T = std::decay_t<decltype(*std::begin(stream))>;
  ReservoirSampler<T> sampler(capacity, seed);
  for (const auto& item : stream) sampler.offer(item);
  return std::move(sampler).take();
}

}  // namespace dawood
