#include "stgt/numerics.hpp"

#include <algorithm>

namespace stgt {

std::size_t ParamVector::add_segment(std::string name, std::vector<std::size_t> shape) {
  if (has_segment(name)) throw ConfigError("duplicate parameter segment '" + name + "'");
  Segment s;
  s.name = std::move(name);
  s.offset = data_.size();
  s.length = TokenTensor::element_count(shape);
  s.shape = std::move(shape);
  data_.resize(data_.size() + s.length, 0.0);
  segments_.push_back(std::move(s));
  return segments_.size() - 1;
}

const ParamVector::Segment& ParamVector::segment(const std::string& name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return s;
  }
  throw IndexError("no parameter segment named '" + name + "'");
}

bool ParamVector::has_segment(const std::string& name) const {
  return std::any_of(segments_.begin(), segments_.end(), [&](const Segment& s) { return s.name == name; });
}

std::span<double> ParamVector::values(const std::string& name) {
  const auto& s = segment(name);
  return {data_.data() + s.offset, s.length};
}

std::span<const double> ParamVector::values(const std::string& name) const {
  const auto& s = segment(name);
  return {data_.data() + s.offset, s.length};
}

TokenTensor ParamVector::tensor(const std::string& name) const {
  const auto& s = segment(name);
  return TokenTensor(s.shape, std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(s.offset),
                                                  data_.begin() + static_cast<std::ptrdiff_t>(s.offset + s.length)));
}

void ParamVector::assign(const std::string& name, const TokenTensor& t) {
  const auto& s = segment(name);
  if (t.size() != s.length) {
    throw DimensionError("segment '" + name + "' expects " + shape_string(s.shape) + ", got " + shape_string(t.shape()));
  }
  std::copy(t.flat().begin(), t.flat().end(), data_.begin() + static_cast<std::ptrdiff_t>(s.offset));
}

ParamVector ParamVector::zeros_like() const {
  ParamVector z = *this;
  std::fill(z.data_.begin(), z.data_.end(), 0.0);
  return z;
}

std::vector<double> finite_diff_grad_at(const std::function<double(const ParamVector&)>& f, const ParamVector& theta,
                                        const std::vector<std::size_t>& coords, double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite-difference step must be positive");
  ParamVector work = theta;
  std::vector<double> grad(coords.size());
  for (std::size_t c = 0; c < coords.size(); ++c) {
    const std::size_t i = coords[c];
    if (i >= theta.size()) throw IndexError("coordinate " + std::to_string(i) + " out of range");
    const double orig = work.data()[i];
    work.data()[i] = orig + eps;
    const double fp = f(work);
    work.data()[i] = orig - eps;
    const double fm = f(work);
    work.data()[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw OracleError("non-finite function value at coordinate " + std::to_string(i), i);
    }
    grad[c] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

std::vector<double> finite_diff_grad(const std::function<double(const ParamVector&)>& f, const ParamVector& theta,
                                     double eps) {
  std::vector<std::size_t> all(theta.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return finite_diff_grad_at(f, theta, all, eps);
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor) {
  if (analytic.size() != numeric.size()) throw DimensionError("gradient length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    const double err = std::abs(analytic[i] - numeric[i]);
    if (!std::isfinite(err)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, denom > 0.0 ? err / denom : err);
  }
  return worst;
}

}  // namespace stgt
