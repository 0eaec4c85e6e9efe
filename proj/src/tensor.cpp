#include "scanfer/tensor.hpp"

#include "scanfer/errors.hpp"

#include <cstring>
#include <numeric>

namespace scanfer {

Index element_count(const Shape& shape) {
    Index n = 1;
    for (Index d : shape) {
        if (d < 1) throw ShapeError("non-positive dimension in shape " + to_string(shape));
        n *= d;
    }
    return n;
}

std::string to_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(Eigen::VectorXd::Constant(element_count(shape_), fill)) {}

Tensor::Tensor(Shape shape, Eigen::VectorXd data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size())
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         to_string(shape_));
}

Tensor::Tensor(Shape shape, std::initializer_list<double> values) : shape_(std::move(shape)) {
    if (element_count(shape_) != static_cast<Index>(values.size()))
        throw ShapeError("initializer length does not match shape " + to_string(shape_));
    data_.resize(static_cast<Index>(values.size()));
    std::copy(values.begin(), values.end(), data_.data());
}

Index Tensor::dim(Index axis) const {
    if (axis < 0) axis += rank();
    if (axis < 0 || axis >= rank()) throw ShapeError("axis out of range for shape " + to_string(shape_));
    return shape_[static_cast<std::size_t>(axis)];
}

Index Tensor::offset(std::initializer_list<Index> idx) const {
    if (static_cast<Index>(idx.size()) != rank()) throw ShapeError("index rank mismatch");
    Index off = 0;
    std::size_t axis = 0;
    for (Index i : idx) {
        if (i < 0 || i >= shape_[axis]) throw ShapeError("index out of range");
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

double& Tensor::at(std::initializer_list<Index> idx) { return data_[offset(idx)]; }
double Tensor::at(std::initializer_list<Index> idx) const { return data_[offset(idx)]; }

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (element_count(shape) != size())
        throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    return Tensor(std::move(shape), data_);
}

MatrixMap Tensor::matrix(Index rows, Index cols) {
    if (rows * cols != size()) throw ShapeError("matrix view size mismatch");
    return MatrixMap(data_.data(), rows, cols);
}

ConstMatrixMap Tensor::matrix(Index rows, Index cols) const {
    if (rows * cols != size()) throw ShapeError("matrix view size mismatch");
    return ConstMatrixMap(data_.data(), rows, cols);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.data().data(), b.data().data(),
                       static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

}  // namespace scanfer
