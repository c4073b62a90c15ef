#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>

namespace bgm {

// Multi-producer/multi-consumer FIFO with a hard capacity.
// OverflowPolicy::DropOldest evicts the head when full; Block makes push wait.
template <typename T>
class BoundedQueue {
public:
    enum class OverflowPolicy { DropOldest, Block };

    explicit BoundedQueue(std::size_t capacity, OverflowPolicy policy = OverflowPolicy::DropOldest)
        : capacity_(capacity == 0 ? 1 : capacity), policy_(policy) {}

    // Returns the evicted element, if any. Pushing to a closed queue is a no-op
    // that hands the value back as "evicted".
    std::optional<T> push(T value) {
        std::unique_lock lock(mutex_);
        if (policy_ == OverflowPolicy::Block) {
            not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
        }
        if (closed_) return std::optional<T>(std::move(value));
        std::optional<T> evicted;
        if (items_.size() >= capacity_) {
            evicted = std::move(items_.front());
            items_.pop_front();
        }
        items_.push_back(std::move(value));
        not_empty_.notify_one();
        return evicted;
    }

    // Blocks until an item is available; nullopt once closed and drained.
    std::optional<T> pop() {
        std::unique_lock lock(mutex_);
        not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
        if (items_.empty()) return std::nullopt;
        T value = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return value;
    }

    void close() {
        std::lock_guard lock(mutex_);
        closed_ = true;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return items_.size();
    }

    std::size_t capacity() const noexcept { return capacity_; }

private:
    const std::size_t capacity_;
    const OverflowPolicy policy_;
    mutable std::mutex mutex_;
    std::condition_variable not_empty_;
    std::condition_variable not_full_;
    std::deque<T> items_;
    bool closed_ = false;
};

}  // namespace bgm
