#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace reavae {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major tensor. Image batches use NCHW.
template <std::floating_point T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(numel(shape_), fill) {}
    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data))
    {
        if (data_.size() != numel(shape_))
            throw std::invalid_argument("tensor data size " + std::to_string(data_.size()) +
                                        " does not match shape " + to_string(shape_));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    int dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& at(int n, int c, int h, int w) noexcept { return data_[offset(n, c, h, w)]; }
    const T& at(int n, int c, int h, int w) const noexcept { return data_[offset(n, c, h, w)]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(Shape shape) const&
    {
        Tensor t = *this;
        return std::move(t).reshaped(std::move(shape));
    }
    Tensor reshaped(Shape shape) &&
    {
        if (numel(shape) != data_.size())
            throw std::invalid_argument("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
        shape_ = std::move(shape);
        return std::move(*this);
    }

    template <std::floating_point U>
    Tensor<U> cast() const
    {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    Tensor& operator+=(const Tensor& o)
    {
        require_same_shape(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    void require_same_shape(const Tensor& o, const char* what) const
    {
        if (shape_ != o.shape_)
            throw std::invalid_argument(std::string(what) + ": shape mismatch " + to_string(shape_) + " vs " +
                                        to_string(o.shape_));
    }

    bool operator==(const Tensor& o) const = default;

private:
    std::size_t offset(int n, int c, int h, int w) const noexcept
    {
        return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }

    Shape shape_;
    std::vector<T> data_;
};

/// Integer label planes, batch × height × width.
struct Labels {
    int batch = 0;
    int height = 0;
    int width = 0;
    std::vector<int> data;

    Labels() = default;
    Labels(int n, int h, int w, int fill = 0)
        : batch(n), height(h), width(w), data(static_cast<std::size_t>(n) * h * w, fill)
    {
    }

    int& at(int n, int i, int j) noexcept { return data[(static_cast<std::size_t>(n) * height + i) * width + j]; }
    int at(int n, int i, int j) const noexcept { return data[(static_cast<std::size_t>(n) * height + i) * width + j]; }
    std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }

    bool operator==(const Labels&) const = default;
};

} // namespace reavae
