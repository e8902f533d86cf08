#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fgnn {

#ifdef FGNN_REAL32
using real_t = float;
#else
using real_t = double;
#endif

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error {
    using Error::Error;
};
struct IndivisibleChannels : Error {
    using Error::Error;
};
struct NonSquareSpatial : Error {
    using Error::Error;
};

/// Dense n-d array. Layout is batch x channels x height x width for 4-d
/// tensors and batch x features for 2-d, row-major, contiguous.
class Tensor {
  public:
    std::vector<int> shape;
    std::vector<real_t> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(count(shape)), real_t(0));
    }
    Tensor(std::vector<int> s, std::vector<real_t> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != count(shape))
            throw ShapeMismatch("tensor data length " + std::to_string(data.size()) +
                                " does not match shape volume " + std::to_string(count(shape)));
    }

    static int64_t count(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    int rank() const { return static_cast<int>(shape.size()); }
    int64_t size() const { return static_cast<int64_t>(data.size()); }

    int batch() const { return shape.at(0); }
    int channels() const { return shape.at(1); }
    int height() const { return shape.at(2); }
    int width() const { return shape.at(3); }
    int features() const { return shape.at(1); }

    real_t& operator()(int b, int c, int h, int w) {
        return data[((static_cast<size_t>(b) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    real_t operator()(int b, int c, int h, int w) const {
        return data[((static_cast<size_t>(b) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    real_t& operator()(int b, int f) { return data[static_cast<size_t>(b) * shape[1] + f]; }
    real_t operator()(int b, int f) const { return data[static_cast<size_t>(b) * shape[1] + f]; }

    real_t* row_ptr(int b, int c, int h) {
        return &data[((static_cast<size_t>(b) * shape[1] + c) * shape[2] + h) * shape[3]];
    }
    const real_t* row_ptr(int b, int c, int h) const {
        return &data[((static_cast<size_t>(b) * shape[1] + c) * shape[2] + h) * shape[3]];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    Tensor reshaped(std::vector<int> s) const {
        if (count(s) != size())
            throw ShapeMismatch("reshape from " + shape_str(shape) + " to " + shape_str(s));
        return Tensor(std::move(s), data);
    }

    static std::string shape_str(const std::vector<int>& s) {
        std::string out = "(";
        for (size_t i = 0; i < s.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(s[i]);
        }
        return out + ")";
    }
};

inline real_t max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeMismatch("max_abs_diff: " + Tensor::shape_str(a.shape) + " vs " +
                            Tensor::shape_str(b.shape));
    real_t m = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        real_t d = std::abs(a.data[i] - b.data[i]);
        if (d > m) m = d;
    }
    return m;
}

/// Deterministic RNG. The engine is the standard-specified mt19937_64;
/// distributions are hand-rolled so streams are stable across standard
/// library implementations.
class Rng {
  public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    real_t uniform(real_t lo, real_t hi) {
        return lo + static_cast<real_t>(uniform01()) * (hi - lo);
    }

    // unbiased integer in [0, n)
    int uniform_int(int n) {
        uint64_t bound = static_cast<uint64_t>(n);
        uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return static_cast<int>(x % bound);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

    void fill_uniform(Tensor& t, real_t lo, real_t hi) {
        for (auto& x : t.data) x = uniform(lo, hi);
    }

  private:
    std::mt19937_64 eng_;
};

}  // namespace fgnn
