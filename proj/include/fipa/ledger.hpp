#pragma once

#include <atomic>
#include <cstddef>

namespace fipa {

// Process-wide tally of bytes held by live tensor buffers.
//
// The scaling benchmark brackets the measured region with
// set_enabled/reset_peak so the recorded peak reflects the working set of
// the algorithm under test, not of input construction. Tensors remember at
// construction whether they were registered, so flipping `enabled` in the
// middle of a run never unbalances the ledger.
class AllocationLedger {
public:
    static AllocationLedger& instance();

    void on_alloc(std::size_t bytes);
    void on_free(std::size_t bytes);

    // Only tensors constructed while enabled are tracked.
    void set_enabled(bool enabled) { enabled_.store(enabled, std::memory_order_relaxed); }
    bool enabled() const { return enabled_.load(std::memory_order_relaxed); }

    // Forget the historical peak; it restarts from the currently live bytes.
    void reset_peak();

    std::size_t current_bytes() const { return current_.load(std::memory_order_relaxed); }
    std::size_t peak_bytes() const { return peak_.load(std::memory_order_relaxed); }

    AllocationLedger(const AllocationLedger&) = delete;
    AllocationLedger& operator=(const AllocationLedger&) = delete;

private:
    AllocationLedger() = default;

    std::atomic<std::size_t> current_{0};
    std::atomic<std::size_t> peak_{0};
    std::atomic<bool> enabled_{true};
};

}  // namespace fipa
