#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace rltopic {

using real = double;

/// Dense row-major tensor of rank 0 (scalar), 1 (vector) or 2 (matrix).
class Tensor {
   public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, real fill = 0);
    Tensor(std::vector<std::size_t> shape, std::vector<real> data);

    static Tensor scalar(real v) { return Tensor({}, std::vector<real>{v}); }
    static Tensor vector(std::vector<real> v);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<real> v);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // Matrix view: vectors are a single row, scalars 1x1.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<real> data() { return data_; }
    std::span<const real> data() const { return data_; }
    real* ptr() { return data_.data(); }
    const real* ptr() const { return data_.data(); }

    real& operator[](std::size_t i) { return data_[i]; }
    real operator[](std::size_t i) const { return data_[i]; }
    real& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    real at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    real item() const;
    void fill(real v);
    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    friend bool operator==(const Tensor&, const Tensor&) = default;

   private:
    std::vector<std::size_t> shape_;
    std::vector<real> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace rltopic
