#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace scanfer {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Dense row-major array of doubles with shape metadata.
///
/// Value type: copies are deep. Rank-0 tensors (empty shape) hold one
/// element and are used for scalar losses.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, Eigen::VectorXd data);
    Tensor(Shape shape, std::initializer_list<double> values);

    static Tensor scalar(double v) { return Tensor(Shape{}, v); }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
    [[nodiscard]] Index size() const noexcept { return data_.size(); }
    [[nodiscard]] Index dim(Index axis) const;
    [[nodiscard]] bool empty() const noexcept { return data_.size() == 0; }

    [[nodiscard]] Eigen::VectorXd& data() noexcept { return data_; }
    [[nodiscard]] const Eigen::VectorXd& data() const noexcept { return data_; }
    [[nodiscard]] std::span<double> values() noexcept { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
    [[nodiscard]] std::span<const double> values() const noexcept {
        return {data_.data(), static_cast<std::size_t>(data_.size())};
    }

    double& operator[](Index i) { return data_[i]; }
    double operator[](Index i) const { return data_[i]; }

    /// Multi-index access; the index count must equal rank().
    double& at(std::initializer_list<Index> idx);
    [[nodiscard]] double at(std::initializer_list<Index> idx) const;

    [[nodiscard]] double item() const;

    /// Same data, new shape with an equal element count.
    [[nodiscard]] Tensor reshaped(Shape shape) const;

    /// View as a rows x cols row-major matrix (rows * cols == size()).
    MatrixMap matrix(Index rows, Index cols);
    [[nodiscard]] ConstMatrixMap matrix(Index rows, Index cols) const;

    [[nodiscard]] bool all_finite() const { return data_.allFinite(); }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Index offset(std::initializer_list<Index> idx) const;

    Shape shape_;
    Eigen::VectorXd data_;
};

[[nodiscard]] Index element_count(const Shape& shape);
[[nodiscard]] std::string to_string(const Shape& shape);

/// Bitwise comparison, distinguishing -0.0/+0.0 and NaN payloads.
[[nodiscard]] bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace scanfer
