#include "farcon/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "farcon/errors.hpp"

namespace farcon {

std::size_t shape_product(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_string() + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in Tensor::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::cols() const noexcept {
  if (shape_.size() <= 1) return 1;
  std::size_t c = 1;
  for (std::size_t i = 1; i < shape_.size(); ++i) c *= shape_[i];
  return c;
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string());
  return data_[0];
}

double Tensor::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::select_rows(std::span<const std::size_t> indices) const {
  const std::size_t c = cols();
  std::vector<std::size_t> shape = shape_;
  if (shape.empty()) shape = {1};
  shape[0] = indices.size();
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows()) throw DimensionError("row index out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * c), c,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return out;
}

Tensor Tensor::slice_cols(std::size_t begin, std::size_t end) const {
  const std::size_t c = cols();
  if (begin > end || end > c) throw DimensionError("column slice out of range for " + shape_string());
  const std::size_t w = end - begin;
  Tensor out({rows(), w});
  for (std::size_t r = 0; r < rows(); ++r) {
    for (std::size_t j = 0; j < w; ++j) out.data_[r * w + j] = data_[r * c + begin + j];
  }
  return out;
}

Tensor Tensor::concat_cols(std::span<const Tensor* const> parts) {
  if (parts.empty()) return {};
  const std::size_t n = parts[0]->rows();
  std::size_t width = 0;
  for (const Tensor* p : parts) {
    if (p->rows() != n) throw DimensionError("concat_cols: row counts differ");
    width += p->cols();
  }
  Tensor out({n, width});
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t offset = 0;
    for (const Tensor* p : parts) {
      const std::size_t c = p->cols();
      for (std::size_t j = 0; j < c; ++j) out.data_[r * width + offset + j] = p->data_[r * c + j];
      offset += c;
    }
  }
  return out;
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

}  // namespace farcon
