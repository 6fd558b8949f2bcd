#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvr {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

// Dense row-major tensor of doubles. Plain storage; all structure lives in ops.
struct Tensor {
    Shape shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), v(shape_numel(shape), 0.0) {}
    Tensor(Shape s, double fill) : shape(std::move(s)), v(shape_numel(shape), fill) {}
    Tensor(Shape s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
        if (v.size() != shape_numel(shape))
            throw std::runtime_error("Tensor: data size does not match shape " + shape_str(shape));
    }

    static Tensor scalar(double x) { return Tensor({1}, {x}); }

    std::size_t size() const { return v.size(); }
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const {
        if (shape.size() != 2) throw std::runtime_error("Tensor::cols: not 2-D");
        return shape[1];
    }

    double& at(std::size_t i) { return v[i]; }
    double at(std::size_t i) const { return v[i]; }
    double& at2(std::size_t r, std::size_t c) { return v[r * shape[1] + c]; }
    double at2(std::size_t r, std::size_t c) const { return v[r * shape[1] + c]; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

}  // namespace mvr
