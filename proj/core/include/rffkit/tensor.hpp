#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "rffkit/common.hpp"

namespace rffkit {

// Dense row-major double tensor. Batch dimension first where applicable.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}

    static Tensor zeros(std::vector<std::size_t> s) {
        std::size_t n = 1;
        for (auto d : s) n *= d;
        return Tensor{std::move(s), std::vector<double>(n, 0.0)};
    }

    static Tensor full(std::vector<std::size_t> s, double v) {
        Tensor t = zeros(std::move(s));
        for (auto& x : t.data) x = v;
        return t;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape[i]; }

    // 2-D and 3-D accessors for readability outside hot loops.
    double& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    double& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline std::string shape_str(const Tensor& t) {
    std::string s = "[";
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(t.shape[i]);
    }
    return s + "]";
}

// Learnable tensor: value plus gradient buffer and Adam moments, all same shape.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)),
          value(std::move(v)),
          grad(Tensor::zeros(value.shape)),
          adam_m(Tensor::zeros(value.shape)),
          adam_v(Tensor::zeros(value.shape)) {}

    void zero_grad() {
        for (auto& g : grad.data) g = 0.0;
    }
};

}  // namespace rffkit
