#pragma once

// Dense row-major tensor of rank 1..4 plus the seeded RNG used for all
// weight initialization. Scalar type is a template parameter: float is the
// inference precision, double the verification precision.

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace daponet {

using Shape = std::vector<std::int64_t>;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension/extent disagreement; message names the offending dimension.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid argument value (bad config, bad flag, degenerate request).
struct ValueError : Error {
    using Error::Error;
};

inline std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

// Verification mode: when on, every op checks its output for NaN/Inf.
// Off by default; the check suite and the double-precision tests turn it on.
inline std::atomic<bool>& verify_mode_flag() {
    static std::atomic<bool> flag{false};
    return flag;
}
inline void set_verify_mode(bool on) { verify_mode_flag().store(on); }
inline bool verify_mode() { return verify_mode_flag().load(); }

template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(static_cast<std::size_t>(numel(shape_)), T(0));
        init_strides();
    }

    Tensor(Shape shape, std::vector<T> values)
        : shape_(std::move(shape)), data_(std::move(values)) {
        validate_shape();
        if (numel(shape_) != static_cast<std::int64_t>(data_.size()))
            throw ShapeError("tensor: data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
        init_strides();
    }

    static Tensor full(Shape shape, T v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
    const Shape& shape() const { return shape_; }
    std::int64_t extent(std::int64_t axis) const { return shape_[static_cast<std::size_t>(axis)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    T& at(std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& at(std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
    T& at(std::int64_t i, std::int64_t j) {
        return data_[static_cast<std::size_t>(i * stride_[0] + j)];
    }
    const T& at(std::int64_t i, std::int64_t j) const {
        return data_[static_cast<std::size_t>(i * stride_[0] + j)];
    }
    T& at(std::int64_t i, std::int64_t j, std::int64_t k) {
        return data_[static_cast<std::size_t>(i * stride_[0] + j * stride_[1] + k)];
    }
    const T& at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return data_[static_cast<std::size_t>(i * stride_[0] + j * stride_[1] + k)];
    }
    T& at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) {
        return data_[static_cast<std::size_t>(i * stride_[0] + j * stride_[1] + k * stride_[2] + l)];
    }
    const T& at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) const {
        return data_[static_cast<std::size_t>(i * stride_[0] + j * stride_[1] + k * stride_[2] + l)];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> v(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) v[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(v));
    }

private:
    void validate_shape() const {
        if (shape_.empty() || shape_.size() > 4)
            throw ShapeError("tensor: rank must be 1..4, got " + std::to_string(shape_.size()));
        for (std::size_t i = 0; i < shape_.size(); ++i)
            if (shape_[i] < 1)
                throw ShapeError("tensor: extent of axis " + std::to_string(i) +
                                 " must be >= 1, got " + std::to_string(shape_[i]));
    }

    // stride_[d] = elements to skip per unit of axis d (last axis is unit).
    void init_strides() {
        const auto r = shape_.size();
        std::array<std::int64_t, 4> full{1, 1, 1, 1};
        for (std::size_t i = r; i-- > 1;) full[i - 1] = full[i] * shape_[i];
        // shift so stride_[0] belongs to axis 0 of this rank
        for (std::size_t i = 0; i + 1 < r; ++i) stride_[i] = full[i];
        stride_[r - 1] = 1;
    }

    Shape shape_;
    std::array<std::int64_t, 4> stride_{1, 1, 1, 1};
    std::vector<T> data_;
};

template <typename T>
inline void check_finite(const Tensor<T>& t, const char* op) {
    if (!verify_mode()) return;
    for (std::int64_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(static_cast<double>(t[i])))
            throw ValueError(std::string(op) + ": non-finite value at flat index " +
                             std::to_string(i));
}

// Seeded generator: splitmix64 expands the seed into xoshiro256++ state.
// Bit-exact across platforms; the stream is documented in the README.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& si : s_) si = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller (two draws per value, no caching)
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {  // inclusive bounds
        const auto span = static_cast<std::uint64_t>(hi - lo + 1);
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    template <typename T>
    Tensor<T> uniform_tensor(Shape shape, double lo, double hi) {
        Tensor<T> t(std::move(shape));
        for (std::int64_t i = 0; i < t.size(); ++i)
            t[i] = static_cast<T>(uniform(lo, hi));
        return t;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::array<std::uint64_t, 4> s_{};
};

}  // namespace daponet
