#include "fipa/ledger.hpp"

namespace fipa {

AllocationLedger& AllocationLedger::instance() {
    static AllocationLedger ledger;
    return ledger;
}

void AllocationLedger::on_alloc(std::size_t bytes) {
    std::size_t now = current_.fetch_add(bytes, std::memory_order_relaxed) + bytes;
    std::size_t peak = peak_.load(std::memory_order_relaxed);
    while (now > peak && !peak_.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
    }
}

void AllocationLedger::on_free(std::size_t bytes) {
    current_.fetch_sub(bytes, std::memory_order_relaxed);
}

void AllocationLedger::reset_peak() {
    peak_.store(current_.load(std::memory_order_relaxed), std::memory_order_relaxed);
}

}  // namespace fipa
