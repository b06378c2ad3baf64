#include "stgt/tensor.hpp"

#include <sstream>

namespace stgt {

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

BitMatrix BitMatrix::from_rows(const std::vector<std::vector<int>>& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.front().size();
  BitMatrix out(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    if (rows[i].size() != c) throw DimensionError("ragged rows in BitMatrix::from_rows");
    for (std::size_t j = 0; j < c; ++j) out.set(i, j, rows[i][j] != 0);
  }
  return out;
}

std::size_t BitMatrix::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::size_t BitMatrix::row_count(std::size_t i) const {
  auto r = row(i);
  return static_cast<std::size_t>(std::count(r.begin(), r.end(), std::uint8_t{1}));
}

bool BitMatrix::subset_of(const BitMatrix& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_) return false;
  for (std::size_t k = 0; k < bits_.size(); ++k) {
    if (bits_[k] && !other.bits_[k]) return false;
  }
  return true;
}

}  // namespace stgt
