#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mgait {

// Dense row-major tensor of 64-bit floats. Values are treated as immutable
// once the tensor is handed to a trace or another owner; copies share the
// underlying buffer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<long> shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.buf_ = std::make_shared<std::vector<double>>(count(t.shape_), 0.0);
    return t;
  }

  static Tensor full(std::vector<long> shape, double v) {
    Tensor t = zeros(std::move(shape));
    for (double& x : *t.buf_) x = v;
    return t;
  }

  static Tensor scalar(double v) { return full({1}, v); }

  static Tensor from(std::vector<long> shape, std::vector<double> data) {
    if (count(shape) != static_cast<long>(data.size()))
      throw std::invalid_argument("Tensor::from: shape/data size mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.buf_ = std::make_shared<std::vector<double>>(std::move(data));
    return t;
  }

  const std::vector<long>& shape() const { return shape_; }
  long rank() const { return static_cast<long>(shape_.size()); }
  long size() const { return buf_ ? static_cast<long>(buf_->size()) : 0; }
  bool empty() const { return !buf_; }

  long dim(long i) const { return shape_.at(static_cast<size_t>(i)); }
  // 2-D helpers; tensors of rank 1 are treated as a single row.
  long rows() const { return rank() >= 2 ? shape_[0] : 1; }
  long cols() const { return rank() >= 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }

  const double* data() const { return buf_->data(); }
  double* mutable_data() { return buf_->data(); }

  double operator[](long i) const { return (*buf_)[static_cast<size_t>(i)]; }

  double at(std::initializer_list<long> idx) const {
    if (static_cast<long>(idx.size()) != rank())
      throw std::invalid_argument("Tensor::at: index rank mismatch");
    long flat = 0;
    long i = 0;
    for (long v : idx) {
      if (v < 0 || v >= shape_[static_cast<size_t>(i)])
        throw std::out_of_range("Tensor::at: index out of range");
      flat = flat * shape_[static_cast<size_t>(i)] + v;
      ++i;
    }
    return (*buf_)[static_cast<size_t>(flat)];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  // Deep copy with a private buffer (used when a caller must mutate).
  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.buf_ = std::make_shared<std::vector<double>>(*buf_);
    return t;
  }

  static long count(const std::vector<long>& shape) {
    long n = 1;
    for (long d : shape) {
      if (d <= 0) throw std::invalid_argument("Tensor: non-positive dimension");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<long> shape_;
  std::shared_ptr<std::vector<double>> buf_;
};

inline std::string shape_str(const std::vector<long>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace mgait
