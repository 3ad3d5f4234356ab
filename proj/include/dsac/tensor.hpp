#pragma once

#include "dsac/types.hpp"

#include <functional>
#include <numeric>
#include <sstream>

namespace dsac {

using Shape = std::vector<Index>;

inline Index shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline bool is_image_shape(const Shape& s) { return s.size() == 3; }

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

// Dense row-major array with shape metadata. Flat storage; views are Eigen maps.
template <typename Scalar>
class Tensor {
 public:
  using Storage = Vec<Scalar>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    data_ = Storage::Zero(shape_product(shape_));
  }

  Tensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (shape_product(shape_) != data_.size()) {
      throw ShapeError("tensor shape " + to_string(shape_) + " does not match " +
                       std::to_string(data_.size()) + " elements");
    }
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  const Storage& data() const { return data_; }
  Storage& data() { return data_; }

  Scalar operator[](Index i) const { return data_[i]; }
  Scalar& operator[](Index i) { return data_[i]; }

  // Row vector view of the flattened tensor (one batch row).
  auto row() const { return Eigen::Map<const RowVec<Scalar>>(data_.data(), data_.size()); }

  // Reinterpret as rows x cols (row-major); rows * cols must equal size().
  auto as_matrix(Index rows, Index cols) const {
    if (rows * cols != size()) {
      throw ShapeError("cannot view " + to_string(shape_) + " as " + shape_string(rows, cols));
    }
    return Eigen::Map<const Mat<Scalar>>(data_.data(), rows, cols);
  }

  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

 private:
  void validate_shape() const {
    for (Index d : shape_) {
      if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape_));
    }
  }

  Shape shape_;
  Storage data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace dsac
