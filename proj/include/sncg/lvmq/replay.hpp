#pragma once

#include <cstddef>
#include <vector>

#include "sncg/errors.hpp"
#include "sncg/random.hpp"

namespace sncg::lvmq {

/// Bounded FIFO experience store. Once full, each push overwrites the oldest record.
template <class T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw ValidationError("replay capacity must be positive");
    data_.reserve(std::min<std::size_t>(capacity_, 4096));
  }

  void push(T record) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(record));
    } else {
      data_[head_] = std::move(record);
      head_ = (head_ + 1) % capacity_;
    }
    ++pushed_;
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t pushed() const { return pushed_; }

  /// k-th oldest record still stored.
  const T& at(std::size_t k) const { return data_[(head_ + k) % data_.size()]; }

  /// Indices (oldest = 0) drawn uniformly with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const {
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = uniform_index(rng, data_.size());
    return idx;
  }

 private:
  std::size_t capacity_;
  std::vector<T> data_;
  std::size_t head_ = 0;  // oldest record once full
  std::size_t pushed_ = 0;
};

}  // namespace sncg::lvmq
