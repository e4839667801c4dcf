#include "fipa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <utility>

#include "fipa/error.hpp"
#include "fipa/ledger.hpp"

namespace fipa {

std::size_t element_size(Precision p) {
    return p == Precision::f32 ? 4 : 8;
}

const char* precision_name(Precision p) {
    return p == Precision::f32 ? "f32" : "f64";
}

Precision precision_from_name(const std::string& name) {
    if (name == "f32") return Precision::f32;
    if (name == "f64") return Precision::f64;
    throw ValueError("unknown precision '" + name + "' (expected f32 or f64)");
}

namespace {

std::size_t checked_product(const std::vector<std::size_t>& shape) {
    FIPA_REQUIRE(!shape.empty(), "tensor shape needs at least one dimension");
    std::size_t n = 1;
    for (std::size_t d : shape) {
        FIPA_REQUIRE(d > 0, "tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

std::size_t flat_index(const std::vector<std::size_t>& shape,
                       std::initializer_list<std::size_t> index) {
    FIPA_REQUIRE(index.size() == shape.size(), "index rank ", index.size(),
                 " does not match tensor rank ", shape.size());
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
        FIPA_REQUIRE(i < shape[axis], "index ", i, " out of bounds for axis ", axis,
                     " of extent ", shape[axis]);
        flat = flat * shape[axis] + i;
        ++axis;
    }
    return flat;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, Precision precision)
    : shape_(std::move(shape)), size_(checked_product(shape_)), precision_(precision) {
    data_ = std::make_unique<std::byte[]>(byte_size());  // value-initialized: all zeros
    register_with_ledger();
}

Tensor::~Tensor() {
    release_from_ledger();
}

Tensor::Tensor(const Tensor& other)
    : shape_(other.shape_), size_(other.size_), precision_(other.precision_) {
    if (other.data_) {
        data_ = std::make_unique<std::byte[]>(byte_size());
        std::memcpy(data_.get(), other.data_.get(), byte_size());
        register_with_ledger();
    }
}

Tensor& Tensor::operator=(const Tensor& other) {
    if (this != &other) {
        Tensor copy(other);
        *this = std::move(copy);
    }
    return *this;
}

Tensor::Tensor(Tensor&& other) noexcept
    : shape_(std::move(other.shape_)),
      size_(other.size_),
      precision_(other.precision_),
      tracked_(other.tracked_),
      data_(std::move(other.data_)) {
    other.shape_.clear();
    other.size_ = 0;
    other.tracked_ = false;
}

Tensor& Tensor::operator=(Tensor&& other) noexcept {
    if (this != &other) {
        release_from_ledger();
        shape_ = std::move(other.shape_);
        size_ = other.size_;
        precision_ = other.precision_;
        tracked_ = other.tracked_;
        data_ = std::move(other.data_);
        other.shape_.clear();
        other.size_ = 0;
        other.tracked_ = false;
    }
    return *this;
}

void Tensor::register_with_ledger() {
    auto& ledger = AllocationLedger::instance();
    if (size_ > 0 && ledger.enabled()) {
        ledger.on_alloc(byte_size());
        tracked_ = true;
    }
}

void Tensor::release_from_ledger() noexcept {
    if (tracked_) {
        AllocationLedger::instance().on_free(byte_size());
        tracked_ = false;
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, Precision precision) {
    return Tensor(std::move(shape), precision);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, Precision precision) {
    Tensor t(std::move(shape), precision);
    for (std::size_t i = 0; i < t.size(); ++i) t.set_flat(i, value);
    return t;
}

Tensor Tensor::from_values(std::vector<std::size_t> shape, const std::vector<double>& values,
                           Precision precision) {
    Tensor t(std::move(shape), precision);
    FIPA_REQUIRE(values.size() == t.size(), "from_values: ", values.size(),
                 " values for a shape holding ", t.size(), " elements");
    for (std::size_t i = 0; i < t.size(); ++i) t.set_flat(i, values[i]);
    return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
    FIPA_REQUIRE(axis < shape_.size(), "axis ", axis, " out of range for rank ", shape_.size());
    return shape_[axis];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    return get_flat(flat_index(shape_, index));
}

void Tensor::set(std::initializer_list<std::size_t> index, double value) {
    set_flat(flat_index(shape_, index), value);
}

double Tensor::get_flat(std::size_t i) const {
    assert(i < size_);
    if (precision_ == Precision::f32) {
        return static_cast<double>(reinterpret_cast<const float*>(data_.get())[i]);
    }
    return reinterpret_cast<const double*>(data_.get())[i];
}

void Tensor::set_flat(std::size_t i, double value) {
    assert(i < size_);
    if (precision_ == Precision::f32) {
        reinterpret_cast<float*>(data_.get())[i] = static_cast<float>(value);
    } else {
        reinterpret_cast<double*>(data_.get())[i] = value;
    }
}

const float* Tensor::f32() const {
    FIPA_REQUIRE(precision_ == Precision::f32, "tensor holds f64 data, f32 view requested");
    return reinterpret_cast<const float*>(data_.get());
}

float* Tensor::f32() {
    FIPA_REQUIRE(precision_ == Precision::f32, "tensor holds f64 data, f32 view requested");
    return reinterpret_cast<float*>(data_.get());
}

const double* Tensor::f64() const {
    FIPA_REQUIRE(precision_ == Precision::f64, "tensor holds f32 data, f64 view requested");
    return reinterpret_cast<const double*>(data_.get());
}

double* Tensor::f64() {
    FIPA_REQUIRE(precision_ == Precision::f64, "tensor holds f32 data, f64 view requested");
    return reinterpret_cast<double*>(data_.get());
}

Tensor Tensor::to(Precision precision) const {
    if (precision == precision_) return *this;
    Tensor out(shape_, precision);
    for (std::size_t i = 0; i < size_; ++i) out.set_flat(i, get_flat(i));
    return out;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    Tensor out(std::move(shape), precision_);
    FIPA_REQUIRE(out.size() == size_, "reshape from ", size_, " to ", out.size(), " elements");
    std::memcpy(out.data_.get(), data_.get(), byte_size());
    return out;
}

// --- operations ------------------------------------------------------------

namespace {

template <class T>
void matmul_rows(const T* a, const T* b, T* out, std::size_t m, std::size_t k, std::size_t n) {
    std::vector<double> acc(n);
    for (std::size_t i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = static_cast<double>(a[i * k + p]);
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) acc[j] += aip * static_cast<double>(brow[j]);
        }
        T* orow = out + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] = static_cast<T>(acc[j]);
    }
}

template <class T>
void add_bias_rows(const T* bias, T* out, std::size_t rows, std::size_t n) {
    for (std::size_t r = 0; r < rows; ++r) {
        T* orow = out + r * n;
        for (std::size_t j = 0; j < n; ++j) {
            orow[j] = static_cast<T>(static_cast<double>(orow[j]) + static_cast<double>(bias[j]));
        }
    }
}

template <class T>
void softmax_rows_impl(const T* x, T* out, std::size_t rows, std::size_t n) {
    std::vector<double> weights(n);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xi = x + r * n;
        double row_max = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            row_max = std::max(row_max, static_cast<double>(xi[j]));
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            weights[j] = std::exp(static_cast<double>(xi[j]) - row_max);
            sum += weights[j];
        }
        T* orow = out + r * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] = static_cast<T>(weights[j] / sum);
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    FIPA_REQUIRE(a.rank() == 2 && b.rank() == 2, "matmul expects rank-2 operands, got ranks ",
                 a.rank(), " and ", b.rank());
    FIPA_REQUIRE(a.dim(1) == b.dim(0), "matmul: inner dimensions differ, ", a.dim(1), " vs ",
                 b.dim(0));
    FIPA_REQUIRE(a.precision() == b.precision(), "matmul: operand precisions differ");
    Tensor out({a.dim(0), b.dim(1)}, a.precision());
    if (a.precision() == Precision::f32) {
        matmul_rows(a.f32(), b.f32(), out.f32(), a.dim(0), a.dim(1), b.dim(1));
    } else {
        matmul_rows(a.f64(), b.f64(), out.f64(), a.dim(0), a.dim(1), b.dim(1));
    }
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    FIPA_REQUIRE(x.rank() >= 1, "softmax_rows expects rank >= 1");
    const std::size_t n = x.dim(x.rank() - 1);
    const std::size_t rows = x.size() / n;
    Tensor out(x.shape(), x.precision());
    if (x.precision() == Precision::f32) {
        softmax_rows_impl(x.f32(), out.f32(), rows, n);
    } else {
        softmax_rows_impl(x.f64(), out.f64(), rows, n);
    }
    return out;
}

Tensor gaussian(Rng& rng, std::vector<std::size_t> shape, double stddev, Precision precision) {
    Tensor out(std::move(shape), precision);
    for (std::size_t i = 0; i < out.size(); ++i) out.set_flat(i, stddev * rng.gaussian());
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    FIPA_REQUIRE(w.rank() == 2, "linear: weights must be rank 2, got rank ", w.rank());
    const std::size_t k = x.dim(x.rank() - 1);
    const std::size_t n = w.dim(1);
    FIPA_REQUIRE(k == w.dim(0), "linear: input width ", k, " does not match weight rows ",
                 w.dim(0));
    FIPA_REQUIRE(x.precision() == w.precision(), "linear: operand precisions differ");
    if (!bias.empty()) {
        FIPA_REQUIRE(bias.rank() == 1 && bias.dim(0) == n, "linear: bias must be a length-", n,
                     " vector");
        FIPA_REQUIRE(bias.precision() == x.precision(), "linear: bias precision differs");
    }

    std::vector<std::size_t> out_shape = x.shape();
    out_shape.back() = n;
    Tensor out(std::move(out_shape), x.precision());
    const std::size_t rows = x.size() / k;
    if (x.precision() == Precision::f32) {
        matmul_rows(x.f32(), w.f32(), out.f32(), rows, k, n);
        if (!bias.empty()) add_bias_rows(bias.f32(), out.f32(), rows, n);
    } else {
        matmul_rows(x.f64(), w.f64(), out.f64(), rows, k, n);
        if (!bias.empty()) add_bias_rows(bias.f64(), out.f64(), rows, n);
    }
    return out;
}

Tensor concat_last(const std::vector<Tensor>& parts) {
    FIPA_REQUIRE(!parts.empty(), "concat_last needs at least one tensor");
    const Tensor& first = parts.front();
    std::size_t total_last = 0;
    for (const Tensor& p : parts) {
        FIPA_REQUIRE(p.rank() == first.rank(), "concat_last: rank mismatch");
        FIPA_REQUIRE(p.precision() == first.precision(), "concat_last: precision mismatch");
        for (std::size_t axis = 0; axis + 1 < first.rank(); ++axis) {
            FIPA_REQUIRE(p.dim(axis) == first.dim(axis),
                         "concat_last: leading dimension mismatch on axis ", axis);
        }
        total_last += p.dim(p.rank() - 1);
    }

    std::vector<std::size_t> out_shape = first.shape();
    out_shape.back() = total_last;
    Tensor out(std::move(out_shape), first.precision());

    const std::size_t esz = element_size(first.precision());
    const std::size_t rows = first.size() / first.dim(first.rank() - 1);
    std::size_t col_offset = 0;
    for (const Tensor& p : parts) {
        const std::size_t width = p.dim(p.rank() - 1);
        for (std::size_t r = 0; r < rows; ++r) {
            std::memcpy(out.raw() + (r * total_last + col_offset) * esz,
                        p.raw() + r * width * esz, width * esz);
        }
        col_offset += width;
    }
    return out;
}

std::vector<Tensor> split_last(const Tensor& x, const std::vector<std::size_t>& widths) {
    FIPA_REQUIRE(!widths.empty(), "split_last needs at least one width");
    const std::size_t last = x.dim(x.rank() - 1);
    std::size_t total = 0;
    for (std::size_t w : widths) total += w;
    FIPA_REQUIRE(total == last, "split_last: widths sum to ", total, " but last axis is ", last);

    const std::size_t esz = element_size(x.precision());
    const std::size_t rows = x.size() / last;
    std::vector<Tensor> parts;
    parts.reserve(widths.size());
    std::size_t col_offset = 0;
    for (std::size_t w : widths) {
        std::vector<std::size_t> shape = x.shape();
        shape.back() = w;
        Tensor part(std::move(shape), x.precision());
        for (std::size_t r = 0; r < rows; ++r) {
            std::memcpy(part.raw() + r * w * esz, x.raw() + (r * last + col_offset) * esz,
                        w * esz);
        }
        col_offset += w;
        parts.push_back(std::move(part));
    }
    return parts;
}

}  // namespace fipa
