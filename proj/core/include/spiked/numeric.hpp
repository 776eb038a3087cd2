#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace spiked {

// Max-shifted log(sum exp(x)); -inf for an empty range.
template <class Range>
double log_sum_exp(const Range& xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

// Row-wise log-sum-exp of a dense matrix.
inline Eigen::VectorXd row_log_sum_exp(const Eigen::MatrixXd& m) {
  const Eigen::VectorXd mx = m.rowwise().maxCoeff();
  const Eigen::ArrayXd s = (m.colwise() - mx).array().exp().rowwise().sum();
  return mx + s.log().matrix();
}

// Running log-sum-exp accumulator.
class LogSumExp {
 public:
  void add(double x) {
    if (x == -std::numeric_limits<double>::infinity()) return;
    if (x <= max_) {
      sum_ += std::exp(x - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - x) + 1.0;
      max_ = x;
    }
  }
  double value() const { return max_ + std::log(sum_); }

 private:
  double max_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
};

struct MeanEstimate {
  double mean = 0.0;
  double std_err = 0.0;
  std::size_t count = 0;
};

inline MeanEstimate summarize(std::span<const double> xs) {
  MeanEstimate e;
  e.count = xs.size();
  if (xs.empty()) return e;
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  e.mean = m;
  if (xs.size() > 1) {
    const double n = static_cast<double>(xs.size());
    e.std_err = std::sqrt(v / (n - 1.0) / n);
  }
  return e;
}

}  // namespace spiked

namespace spiked {

struct GoldenResult {
  double x;
  double value;
};

// Golden-section maximization of f on [a, b] down to bracket width tol.
template <class F>
GoldenResult golden_max(F&& f, double a, double b, double tol) {
  constexpr double kInvPhi = 0.6180339887498949;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  return fc >= fd ? GoldenResult{c, fc} : GoldenResult{d, fd};
}

}  // namespace spiked
