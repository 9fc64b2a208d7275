#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "backaction/errors.hpp"

// Small numerical toolkit shared by the closed-form and oracle code paths:
// adaptive Gauss-Kronrod quadrature, bracketed root finding, order-independent
// summation and weighted linear least squares.
namespace backaction::numerics {

namespace detail {

inline double magnitude(double x) { return std::abs(x); }
inline double magnitude(const std::complex<double>& z) { return std::abs(z); }
template <typename Derived>
double magnitude(const Eigen::MatrixBase<Derived>& v) {
  return v.template lpNorm<Eigen::Infinity>();
}

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
inline constexpr std::array<double, 8> kronrod_nodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kronrod_weights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> gauss_weights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <typename T>
struct Segment {
  double a;
  double b;
  T value;
  double error;
  double abs_sum;
};

template <typename F>
auto gauss_kronrod_15(F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const auto fc = f(center);
  using T = std::decay_t<decltype(fc)>;
  T kronrod = fc * kronrod_weights[7];
  T gauss = fc * gauss_weights[3];
  double abs_sum = magnitude(fc) * kronrod_weights[7];
  for (std::size_t j = 0; j < 7; ++j) {
    const double dx = half * kronrod_nodes[j];
    const T f1 = f(center - dx);
    const T f2 = f(center + dx);
    kronrod += (f1 + f2) * kronrod_weights[j];
    abs_sum += (magnitude(f1) + magnitude(f2)) * kronrod_weights[j];
    if (j % 2 == 1) gauss += (f1 + f2) * gauss_weights[j / 2];
  }
  T value = kronrod * half;
  const double error = magnitude((kronrod - gauss) * half);
  return Segment<T>{a, b, std::move(value), error, abs_sum * std::abs(half)};
}

}  // namespace detail

struct QuadratureOptions {
  double abs_tol = 0.0;
  double rel_tol = 1e-10;
  std::size_t max_segments = 4000;
};

template <typename T>
struct QuadratureResult {
  T value;
  double error;
  std::size_t evaluations;
};

/// Globally adaptive Gauss-Kronrod (7/15) quadrature over consecutive intervals
/// [points[0], points[1]], ..., [points[n-2], points[n-1]]. Interior points should
/// sit on known kinks or jumps of the integrand. The integrand may return double,
/// std::complex<double> or a fixed-size Eigen vector.
template <typename F>
auto integrate(F&& f, std::span<const double> points, const QuadratureOptions& opt = {}) {
  if (points.size() < 2) throw DomainError("integrate: need at least two points");
  using T = decltype(detail::gauss_kronrod_15(f, 0.0, 1.0).value);
  std::vector<detail::Segment<T>> segments;
  segments.reserve(points.size() + 16);
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    if (points[i + 1] > points[i]) segments.push_back(detail::gauss_kronrod_15(f, points[i], points[i + 1]));
  }
  if (segments.empty()) {
    auto seg = detail::gauss_kronrod_15(f, points.front(), points.front());
    return QuadratureResult<T>{seg.value, 0.0, 15};
  }

  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (;;) {
    T total = segments.front().value;
    double error = segments.front().error;
    double abs_total = segments.front().abs_sum;
    std::size_t worst = 0;
    for (std::size_t i = 1; i < segments.size(); ++i) {
      total += segments[i].value;
      error += segments[i].error;
      abs_total += segments[i].abs_sum;
      if (segments[i].error > segments[worst].error) worst = i;
    }
    const double target = std::max(opt.abs_tol, opt.rel_tol * detail::magnitude(total));
    if (error <= target || error <= 50.0 * eps * abs_total) {
      return QuadratureResult<T>{total, error, 15 * segments.size()};
    }
    if (segments.size() >= opt.max_segments) {
      throw NumericError("quadrature did not converge (achieved abs error " + std::to_string(error) +
                             ", target " + std::to_string(target) + ")",
                         error);
    }
    const auto seg = segments[worst];
    const double mid = 0.5 * (seg.a + seg.b);
    segments[worst] = detail::gauss_kronrod_15(f, seg.a, mid);
    segments.push_back(detail::gauss_kronrod_15(f, mid, seg.b));
  }
}

template <typename F>
auto integrate(F&& f, double a, double b, const QuadratureOptions& opt = {}) {
  const std::array<double, 2> points{a, b};
  return integrate(std::forward<F>(f), std::span<const double>(points), opt);
}

/// Integral over the whole real line via x = t / (1 - t^2).
template <typename F>
auto integrate_real_line(F&& f, const QuadratureOptions& opt = {}) {
  auto mapped = [&f](double t) {
    const double s = 1.0 - t * t;
    return f(t / s) * ((1.0 + t * t) / (s * s));
  };
  const std::array<double, 3> points{-1.0, 0.0, 1.0};
  return integrate(mapped, std::span<const double>(points), opt);
}

/// Bisection on a sign change of f over [lo, hi]; returns once the bracket is
/// narrower than x_tol (absolute) or f hits zero.
template <typename F>
double bisect(F&& f, double lo, double hi, double x_tol, int max_iter = 400) {
  double f_lo = f(lo);
  const double f_hi = f(hi);
  if (f_lo == 0.0) return lo;
  if (f_hi == 0.0) return hi;
  if ((f_lo > 0.0) == (f_hi > 0.0)) throw DomainError("bisect: no sign change on bracket");
  for (int i = 0; i < max_iter; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (hi - lo <= x_tol || mid == lo || mid == hi) return mid;
    const double f_mid = f(mid);
    if (f_mid == 0.0) return mid;
    if ((f_mid > 0.0) == (f_lo > 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  throw NumericError("bisect: iteration limit reached", hi - lo);
}

/// Pairwise (tree) summation. The association order depends only on the length
/// of the input, so identical inputs always produce identical sums.
inline double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 8) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

struct LinearFit {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;
  double chi2 = 0.0;
  std::size_t dof = 0;

  double stderr_of(Eigen::Index i) const { return std::sqrt(covariance(i, i)); }
};

/// Weighted least squares y ~ design * beta with per-point 1-sigma errors.
/// The covariance is (A^T W A)^-1, i.e. the errors are taken as known.
inline LinearFit weighted_least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                                        const Eigen::VectorXd& sigma) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (n < p) throw DomainError("least squares: fewer points than parameters");
  const Eigen::VectorXd w = sigma.array().inverse();
  const Eigen::MatrixXd a = w.asDiagonal() * design;
  const Eigen::VectorXd b = w.asDiagonal() * y;
  const Eigen::MatrixXd normal = a.transpose() * a;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw NumericError("least squares: singular normal matrix", 0.0);
  }
  LinearFit fit;
  fit.coefficients = a.colPivHouseholderQr().solve(b);
  fit.covariance = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  fit.chi2 = (a * fit.coefficients - b).squaredNorm();
  fit.dof = static_cast<std::size_t>(n - p);
  return fit;
}

/// Ordinary least squares; the covariance is scaled by the residual variance.
inline LinearFit ordinary_least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
  LinearFit fit = weighted_least_squares(design, y, Eigen::VectorXd::Ones(y.size()));
  if (fit.dof > 0) fit.covariance *= fit.chi2 / static_cast<double>(fit.dof);
  return fit;
}

/// Design matrix [1, x, x^2, ..., x^degree].
inline Eigen::MatrixXd polynomial_design(const Eigen::VectorXd& x, int degree) {
  Eigen::MatrixXd a(x.size(), degree + 1);
  a.col(0).setOnes();
  for (int k = 1; k <= degree; ++k) a.col(k) = a.col(k - 1).cwiseProduct(x);
  return a;
}

}  // namespace backaction::numerics
