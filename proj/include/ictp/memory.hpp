#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <new>
#include <vector>

namespace ictp {

/// Process-wide byte counters for tensor buffers allocated through CountingAllocator.
struct MemoryStats {
  static std::size_t current() noexcept { return current_.load(std::memory_order_relaxed); }
  static std::size_t peak() noexcept { return peak_.load(std::memory_order_relaxed); }
  /// Resets the peak to the current usage.
  static void reset_peak() noexcept { peak_.store(current(), std::memory_order_relaxed); }

  static void add(std::size_t bytes) noexcept {
    const std::size_t now = current_.fetch_add(bytes, std::memory_order_relaxed) + bytes;
    std::size_t prev = peak_.load(std::memory_order_relaxed);
    while (now > prev && !peak_.compare_exchange_weak(prev, now, std::memory_order_relaxed)) {
    }
  }
  static void sub(std::size_t bytes) noexcept { current_.fetch_sub(bytes, std::memory_order_relaxed); }

 private:
  static inline std::atomic<std::size_t> current_{0};
  static inline std::atomic<std::size_t> peak_{0};
};

template <class T>
struct CountingAllocator {
  using value_type = T;

  CountingAllocator() noexcept = default;
  template <class U>
  CountingAllocator(const CountingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    MemoryStats::add(n * sizeof(T));
    return std::allocator<T>{}.allocate(n);
  }
  void deallocate(T* p, std::size_t n) noexcept {
    MemoryStats::sub(n * sizeof(T));
    std::allocator<T>{}.deallocate(p, n);
  }

  template <class U>
  bool operator==(const CountingAllocator<U>&) const noexcept {
    return true;
  }
};

/// Vector whose heap usage is tracked by MemoryStats.
template <class T>
using tracked_vector = std::vector<T, CountingAllocator<T>>;

}  // namespace ictp
