#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "convseg/errors.hpp"
#include "convseg/rng.hpp"

namespace convseg {

// Dense row-major n-dimensional array of doubles with an optional gradient
// buffer of the same length. The universal numeric carrier of the library.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty, or same length as data

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape_)
        : shape(std::move(shape_)), data(numel_of(shape), 0.0) {}

    Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
        : shape(std::move(shape_)), data(std::move(data_)) {
        if (numel_of(shape) != data.size()) {
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape product " +
                             std::to_string(numel_of(shape)));
        }
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    std::size_t numel() const { return data.size(); }

    std::size_t dim(std::size_t i) const { return shape.at(i); }

    // 2-D accessors
    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }

    void zero_grad() { grad.assign(data.size(), 0.0); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i)
            os << (i ? "x" : "") << shape[i];
        os << ']';
        return os.str();
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, double value) {
        Tensor t(std::move(shape));
        std::fill(t.data.begin(), t.data.end(), value);
        return t;
    }

    static Tensor uniform(std::vector<std::size_t> shape, double lo, double hi, Rng& rng) {
        Tensor t(std::move(shape));
        for (double& v : t.data) v = rng.uniform(lo, hi);
        return t;
    }

    static Tensor gaussian(std::vector<std::size_t> shape, double mean, double stddev, Rng& rng) {
        Tensor t(std::move(shape));
        for (double& v : t.data) v = rng.gaussian(mean, stddev);
        return t;
    }
};

inline void check_finite(const Tensor& t, const char* where) {
    if (!t.all_finite())
        throw DivergenceError(std::string("non-finite value in ") + where);
}

}  // namespace convseg
