#pragma once

#include <patchace/error.hpp>

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace patchace {

enum class Dtype { F32, F64, U8 };

inline std::size_t dtype_size(Dtype dt) {
    switch (dt) {
        case Dtype::F32: return 4;
        case Dtype::F64: return 8;
        case Dtype::U8: return 1;
    }
    return 0;
}

inline const char* dtype_name(Dtype dt) {
    switch (dt) {
        case Dtype::F32: return "f32";
        case Dtype::F64: return "f64";
        case Dtype::U8: return "u8";
    }
    return "?";
}

/// Dense row-major (C-order) tensor. The buffer is contiguous and owns its
/// memory; a tensor is immutable by convention once it leaves the function
/// that built it.
class Tensor {
public:
    Tensor() : Tensor(std::vector<std::size_t>{0}, Dtype::F32) {}

    Tensor(std::vector<std::size_t> shape, Dtype dtype)
        : shape_(std::move(shape)), dtype_(dtype) {
        data_.assign(size() * dtype_size(dtype_), std::byte{0});
    }

    static Tensor from_f32(std::vector<std::size_t> shape, std::span<const float> values) {
        Tensor t(std::move(shape), Dtype::F32);
        if (values.size() != t.size())
            throw ArgumentError("Tensor::from_f32: value count does not match shape");
        std::memcpy(t.data_.data(), values.data(), values.size() * sizeof(float));
        return t;
    }

    static Tensor from_f64(std::vector<std::size_t> shape, std::span<const double> values) {
        Tensor t(std::move(shape), Dtype::F64);
        if (values.size() != t.size())
            throw ArgumentError("Tensor::from_f64: value count does not match shape");
        std::memcpy(t.data_.data(), values.data(), values.size() * sizeof(double));
        return t;
    }

    static Tensor from_u8(std::vector<std::size_t> shape, std::span<const std::uint8_t> values) {
        Tensor t(std::move(shape), Dtype::U8);
        if (values.size() != t.size())
            throw ArgumentError("Tensor::from_u8: value count does not match shape");
        std::memcpy(t.data_.data(), values.data(), values.size());
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    Dtype dtype() const { return dtype_; }
    std::size_t rank() const { return shape_.size(); }

    /// Element count; 1 for a zero-dimensional tensor.
    std::size_t size() const {
        return std::accumulate(shape_.begin(), shape_.end(), std::size_t{1},
                               std::multiplies<>());
    }

    std::size_t byte_size() const { return data_.size(); }
    const std::byte* raw() const { return data_.data(); }
    std::byte* raw() { return data_.data(); }

    std::span<const float> f32() const {
        require(Dtype::F32);
        return {reinterpret_cast<const float*>(data_.data()), size()};
    }
    std::span<float> f32() {
        require(Dtype::F32);
        return {reinterpret_cast<float*>(data_.data()), size()};
    }
    std::span<const double> f64() const {
        require(Dtype::F64);
        return {reinterpret_cast<const double*>(data_.data()), size()};
    }
    std::span<double> f64() {
        require(Dtype::F64);
        return {reinterpret_cast<double*>(data_.data()), size()};
    }
    std::span<const std::uint8_t> u8() const {
        require(Dtype::U8);
        return {reinterpret_cast<const std::uint8_t*>(data_.data()), size()};
    }
    std::span<std::uint8_t> u8() {
        require(Dtype::U8);
        return {reinterpret_cast<std::uint8_t*>(data_.data()), size()};
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool same_bytes(const Tensor& other) const {
        return dtype_ == other.dtype_ && shape_ == other.shape_ &&
               data_ == other.data_;
    }

private:
    void require(Dtype dt) const {
        if (dtype_ != dt)
            throw ArgumentError(std::string("Tensor: expected dtype ") + dtype_name(dt) +
                                ", have " + dtype_name(dtype_));
    }

    std::vector<std::size_t> shape_;
    Dtype dtype_ = Dtype::F32;
    std::vector<std::byte> data_;
};

inline std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::string out = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(shape[i]);
    }
    out += ")";
    return out;
}

} // namespace patchace
