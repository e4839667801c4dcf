#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <string>
#include <type_traits>
#include <vector>

#include "fipa/rng.hpp"

namespace fipa {

enum class Precision : std::uint8_t { f32 = 0, f64 = 1 };

std::size_t element_size(Precision p);
const char* precision_name(Precision p);
Precision precision_from_name(const std::string& name);

// Dense row-major tensor.
//
// Values are stored at the declared precision, but every operation in this
// library reads and accumulates in double and rounds once on store. An f32
// tensor therefore carries exactly the per-element rounding a
// single-precision pipeline accumulates through its memory traffic, while
// intermediate arithmetic stays sharp enough to compare against oracles.
//
// Construction registers the buffer with the AllocationLedger when tracking
// is enabled; each tensor remembers whether it was registered so the ledger
// stays balanced however the enabled flag is toggled between allocations.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, Precision precision = Precision::f64);

    static Tensor zeros(std::vector<std::size_t> shape, Precision precision = Precision::f64);
    static Tensor full(std::vector<std::size_t> shape, double value,
                       Precision precision = Precision::f64);
    static Tensor from_values(std::vector<std::size_t> shape, const std::vector<double>& values,
                              Precision precision = Precision::f64);

    ~Tensor();
    Tensor(const Tensor& other);
    Tensor& operator=(const Tensor& other);
    Tensor(Tensor&& other) noexcept;
    Tensor& operator=(Tensor&& other) noexcept;

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const { return size_; }  // element count
    std::size_t byte_size() const { return size_ * element_size(precision_); }
    Precision precision() const { return precision_; }
    bool empty() const { return size_ == 0; }
    bool tracked() const { return tracked_; }

    // Bounds-checked element access; indexes must match the rank.
    double at(std::initializer_list<std::size_t> index) const;
    void set(std::initializer_list<std::size_t> index, double value);

    double get_flat(std::size_t i) const;
    void set_flat(std::size_t i, double value);

    // Typed views of the raw buffer; throw if the precision does not match.
    const float* f32() const;
    float* f32();
    const double* f64() const;
    double* f64();

    // Template-friendly spelling of the typed views, for kernels written
    // once over the element type.
    template <class T>
    const T* data() const {
        if constexpr (std::is_same_v<T, float>) {
            return f32();
        } else {
            static_assert(std::is_same_v<T, double>, "tensors hold float or double");
            return f64();
        }
    }
    template <class T>
    T* data() {
        if constexpr (std::is_same_v<T, float>) {
            return f32();
        } else {
            static_assert(std::is_same_v<T, double>, "tensors hold float or double");
            return f64();
        }
    }
    const std::byte* raw() const { return data_.get(); }
    std::byte* raw() { return data_.get(); }

    Tensor to(Precision precision) const;

    // Same buffer contents under a new shape with equal element count.
    Tensor reshaped(std::vector<std::size_t> shape) const;

private:
    void register_with_ledger();
    void release_from_ledger() noexcept;

    std::vector<std::size_t> shape_;
    std::size_t size_ = 0;
    Precision precision_ = Precision::f64;
    bool tracked_ = false;
    std::unique_ptr<std::byte[]> data_;
};

// --- operations ------------------------------------------------------------
// All of these allocate their outputs through Tensor (so the ledger sees
// them) and require operands of matching precision.

// Standard matrix product, a[m×k] · b[k×n] -> [m×n].
Tensor matmul(const Tensor& a, const Tensor& b);

// Softmax along the last axis with per-row max subtraction; at 64-bit each
// row sums to 1 within 1e-12.
Tensor softmax_rows(const Tensor& x);

// I.i.d. Gaussian draws in flat-index order, scaled by stddev.
Tensor gaussian(Rng& rng, std::vector<std::size_t> shape, double stddev = 1.0,
                Precision precision = Precision::f64);

// y = x·w (+ bias), applied to the last axis of x; w is [k×n], bias [n].
// Pass an empty bias tensor for a pure linear map.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = Tensor());

// Concatenate along the last axis; leading dimensions must agree.
Tensor concat_last(const std::vector<Tensor>& parts);

// Exact inverse of concat_last: split the last axis into the given widths.
std::vector<Tensor> split_last(const Tensor& x, const std::vector<std::size_t>& widths);

}  // namespace fipa
