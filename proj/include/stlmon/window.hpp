#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace stlmon {

/// Fixed-capacity circular buffer used as a deque. No allocation after
/// construction.
template <typename T>
class Ring {
public:
  explicit Ring(std::size_t capacity) : slots_(capacity) {}

  std::size_t capacity() const { return slots_.size(); }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }

  T& front() { return slots_[head_]; }
  const T& front() const { return slots_[head_]; }
  T& back() { return slots_[wrap(head_ + size_ - 1)]; }
  const T& back() const { return slots_[wrap(head_ + size_ - 1)]; }
  const T& operator[](std::size_t k) const { return slots_[wrap(head_ + k)]; }

  void push_back(const T& v) {
    assert(size_ < slots_.size());
    slots_[wrap(head_ + size_)] = v;
    ++size_;
  }
  void pop_front() {
    assert(size_ > 0);
    head_ = wrap(head_ + 1);
    --size_;
  }
  void pop_back() {
    assert(size_ > 0);
    --size_;
  }

private:
  std::size_t wrap(std::size_t k) const { return k >= slots_.size() ? k - slots_.size() : k; }

  std::vector<T> slots_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

/// Sliding-window minimum or maximum over the last `width` indices using a
/// monotonic wedge. Amortized O(1) per push.
class SlidingExtrema {
public:
  enum class Mode { Min, Max };

  struct Entry {
    std::int64_t index = 0;
    double value = 0.0;
  };

  SlidingExtrema(std::size_t width, Mode mode) : width_(width), mode_(mode), wedge_(width) {
    if (width == 0) throw std::invalid_argument("SlidingExtrema width must be positive");
  }

  /// Pushes `value` at `index` (previous index + 1) and returns the extremum
  /// over [index - width + 1, index].
  double push(std::int64_t index, double value) {
    assert(wedge_.empty() || index > wedge_.back().index);
    // Ties evict: the newer entry outlives the older one and carries the same value.
    while (!wedge_.empty() && dominated(wedge_.back().value, value)) {
      wedge_.pop_back();
      ++ops_;
    }
    while (!wedge_.empty() && wedge_.front().index <= index - static_cast<std::int64_t>(width_)) {
      wedge_.pop_front();
      ++ops_;
    }
    wedge_.push_back({index, value});
    ++ops_;
    return wedge_.front().value;
  }

  double current() const { return wedge_.front().value; }
  std::size_t width() const { return width_; }
  Mode mode() const { return mode_; }
  std::size_t wedge_size() const { return wedge_.size(); }
  const Entry& wedge_at(std::size_t k) const { return wedge_[k]; }
  std::uint64_t ops() const { return ops_; }

private:
  bool dominated(double old_value, double new_value) const {
    return mode_ == Mode::Max ? old_value <= new_value : old_value >= new_value;
  }

  std::size_t width_;
  Mode mode_;
  Ring<Entry> wedge_;
  std::uint64_t ops_ = 0;
};

/// Running count of satisfied flags over the last `width` pushes.
class CountWindow {
public:
  explicit CountWindow(std::size_t width) : flags_(width, 0) {
    if (width == 0) throw std::invalid_argument("CountWindow width must be positive");
  }

  /// Returns the number of set flags among the samples currently held.
  std::int64_t push(bool flag) {
    if (filled_ == flags_.size()) {
      count_ -= flags_[next_];
    } else {
      ++filled_;
    }
    flags_[next_] = flag ? 1 : 0;
    count_ += flags_[next_];
    next_ = next_ + 1 == flags_.size() ? 0 : next_ + 1;
    ops_ += 2;
    return count_;
  }

  std::int64_t count() const { return count_; }
  /// Samples currently held: min(pushes, width).
  std::int64_t filled() const { return static_cast<std::int64_t>(filled_); }
  std::size_t width() const { return flags_.size(); }
  std::uint64_t ops() const { return ops_; }

private:
  std::vector<std::uint8_t> flags_;
  std::size_t next_ = 0;
  std::size_t filled_ = 0;
  std::int64_t count_ = 0;
  std::uint64_t ops_ = 0;
};

/// Fixed delay line: `shift(v)` returns the value pushed `length` calls ago
/// (valid once `length` values have been pushed). Length 0 is the identity.
class DelayLine {
public:
  explicit DelayLine(std::size_t length) : slots_(length) {}

  double shift(double v) {
    if (slots_.empty()) return v;
    const double out = slots_[next_];
    slots_[next_] = v;
    next_ = next_ + 1 == slots_.size() ? 0 : next_ + 1;
    return out;
  }

  std::size_t length() const { return slots_.size(); }

private:
  std::vector<double> slots_;
  std::size_t next_ = 0;
};

}  // namespace stlmon
