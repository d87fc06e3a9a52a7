#include "spforce/contact_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace spforce {

CubicSpline::CubicSpline(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n < 3 || y_.size() != n)
    throw std::invalid_argument("CubicSpline: need >= 3 points and matching sizes");
  for (std::size_t i = 1; i < n; ++i)
    if (!(x_[i] > x_[i - 1]))
      throw std::invalid_argument("CubicSpline: abscissae must be strictly increasing");

  // Natural spline: tridiagonal solve for the knot second derivatives.
  m_.assign(n, 0.0);
  std::vector<double> diag(n, 0.0), rhs(n, 0.0), sub(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = x_[i] - x_[i - 1];
    const double h1 = x_[i + 1] - x_[i];
    sub[i] = h0;
    diag[i] = 2.0 * (h0 + h1);
    rhs[i] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
  }
  // Thomas algorithm on the interior nodes.
  for (std::size_t i = 2; i + 1 < n; ++i) {
    const double w = sub[i] / diag[i - 1];
    diag[i] -= w * (x_[i] - x_[i - 1]);
    rhs[i] -= w * rhs[i - 1];
  }
  for (std::size_t i = n - 2; i >= 1; --i) {
    const double upper = (i + 2 < n) ? (x_[i + 1] - x_[i]) * m_[i + 1] : 0.0;
    m_[i] = (rhs[i] - upper) / diag[i];
    if (i == 1) break;
  }
}

std::size_t CubicSpline::interval(double x) const {
  if (x < x_.front() || x > x_.back())
    throw std::domain_error("CubicSpline: evaluation outside knot range");
  auto it = std::upper_bound(x_.begin(), x_.end(), x);
  std::size_t i = static_cast<std::size_t>(it - x_.begin());
  if (i == 0) return 0;
  if (i >= x_.size()) return x_.size() - 2;
  return i - 1;
}

double CubicSpline::value(double x) const {
  const std::size_t i = interval(x);
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - x) / h, b = (x - x_[i]) / h;
  return a * y_[i] + b * y_[i + 1] +
         ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

double CubicSpline::derivative(double x) const {
  const std::size_t i = interval(x);
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - x) / h, b = (x - x_[i]) / h;
  return (y_[i + 1] - y_[i]) / h -
         (3.0 * a * a - 1.0) / 6.0 * h * m_[i] + (3.0 * b * b - 1.0) / 6.0 * h * m_[i + 1];
}

double CubicSpline::second_derivative(double x) const {
  const std::size_t i = interval(x);
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - x) / h, b = (x - x_[i]) / h;
  return a * m_[i] + b * m_[i + 1];
}

ContactPotentialModel ContactPotentialModel::constant(double value) {
  ContactPotentialModel m;
  m.kind_ = Constant{value};
  return m;
}

ContactPotentialModel ContactPotentialModel::exponential(double v0, double dv, double lambda) {
  if (!(lambda > 0.0))
    throw std::domain_error("ContactPotentialModel: lambda must be > 0");
  ContactPotentialModel m;
  m.kind_ = Exponential{v0, dv, lambda};
  return m;
}

ContactPotentialModel ContactPotentialModel::logarithmic(double vlog, double dvlog, double scale) {
  if (!(scale > 0.0))
    throw std::domain_error("ContactPotentialModel: Lambda must be > 0");
  ContactPotentialModel m;
  m.kind_ = Logarithmic{vlog, dvlog, scale};
  return m;
}

ContactPotentialModel ContactPotentialModel::tabulated(std::vector<double> x,
                                                       std::vector<double> v) {
  ContactPotentialModel m;
  m.kind_ = Tabulated{CubicSpline(std::move(x), std::move(v))};
  return m;
}

ContactPotentialModel ContactPotentialModel::hermite_table(std::vector<double> x,
                                                           std::vector<double> v,
                                                           std::vector<double> v1,
                                                           std::vector<double> v2) {
  const std::size_t n = x.size();
  if (n < 2 || v.size() != n || v1.size() != n || v2.size() != n)
    throw std::invalid_argument("ContactPotentialModel: inconsistent hermite table");
  for (std::size_t i = 1; i < n; ++i)
    if (!(x[i] > x[i - 1]))
      throw std::invalid_argument("ContactPotentialModel: hermite abscissae must increase");
  ContactPotentialModel m;
  m.kind_ = HermiteTable{std::move(x), std::move(v), std::move(v1), std::move(v2)};
  return m;
}

namespace {

// Quintic Hermite basis on [0,1] matching value/slope/curvature at both ends.
ContactPotentialModel::Eval quintic_eval(const ContactPotentialModel::HermiteTable& t, double x) {
  if (x < t.x.front() || x > t.x.back())
    throw std::domain_error("ContactPotentialModel: evaluation outside table range");
  auto it = std::upper_bound(t.x.begin(), t.x.end(), x);
  std::size_t i = static_cast<std::size_t>(it - t.x.begin());
  if (i > 0) --i;
  if (i + 1 >= t.x.size()) i = t.x.size() - 2;

  const double h = t.x[i + 1] - t.x[i];
  const double s = (x - t.x[i]) / h;
  const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;

  // Basis functions (value, then scaled slope and curvature carriers).
  const double H0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
  const double H1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
  const double H2 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5;
  const double H3 = 0.5 * s3 - s4 + 0.5 * s5;
  const double H4 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
  const double H5 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;

  const double dH0 = (-30.0 * s2 + 60.0 * s3 - 30.0 * s4);
  const double dH1 = (1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4);
  const double dH2 = (s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4);
  const double dH3 = (1.5 * s2 - 4.0 * s3 + 2.5 * s4);
  const double dH4 = (-12.0 * s2 + 28.0 * s3 - 15.0 * s4);
  const double dH5 = (30.0 * s2 - 60.0 * s3 + 30.0 * s4);

  const double d2H0 = (-60.0 * s + 180.0 * s2 - 120.0 * s3);
  const double d2H1 = (-36.0 * s + 96.0 * s2 - 60.0 * s3);
  const double d2H2 = (1.0 - 9.0 * s + 18.0 * s2 - 10.0 * s3);
  const double d2H3 = (3.0 * s - 12.0 * s2 + 10.0 * s3);
  const double d2H4 = (-24.0 * s + 84.0 * s2 - 60.0 * s3);
  const double d2H5 = (60.0 * s - 180.0 * s2 + 120.0 * s3);

  const double v = H0 * t.v[i] + H5 * t.v[i + 1] +
                   h * (H1 * t.v1[i] + H4 * t.v1[i + 1]) +
                   h * h * (H2 * t.v2[i] + H3 * t.v2[i + 1]);
  const double v1 = (dH0 * t.v[i] + dH5 * t.v[i + 1]) / h +
                    (dH1 * t.v1[i] + dH4 * t.v1[i + 1]) +
                    h * (dH2 * t.v2[i] + dH3 * t.v2[i + 1]);
  const double v2 = (d2H0 * t.v[i] + d2H5 * t.v[i + 1]) / (h * h) +
                    (d2H1 * t.v1[i] + d2H4 * t.v1[i + 1]) / h +
                    (d2H2 * t.v2[i] + d2H3 * t.v2[i + 1]);
  return {v, v1, v2};
}

}  // namespace

ContactPotentialModel::Eval ContactPotentialModel::eval(double x) const {
  return std::visit(
      [x](const auto& k) -> Eval {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, Constant>) {
          return {k.value, 0.0, 0.0};
        } else if constexpr (std::is_same_v<T, Exponential>) {
          const double e = std::exp(-x / k.lambda);
          return {k.v0 + k.dv * (1.0 - e), k.dv / k.lambda * e,
                  -k.dv / (k.lambda * k.lambda) * e};
        } else if constexpr (std::is_same_v<T, Logarithmic>) {
          if (!(x > 0.0))
            throw std::domain_error("ContactPotentialModel: logarithmic law needs x > 0");
          return {k.vlog + k.dvlog * std::log(x / k.scale), k.dvlog / x, -k.dvlog / (x * x)};
        } else if constexpr (std::is_same_v<T, Tabulated>) {
          return {k.spline.value(x), k.spline.derivative(x), k.spline.second_derivative(x)};
        } else {
          return quintic_eval(k, x);
        }
      },
      kind_);
}

std::string ContactPotentialModel::describe() const {
  std::ostringstream os;
  std::visit(
      [&os](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, Constant>) {
          os << "constant(" << k.value << " V)";
        } else if constexpr (std::is_same_v<T, Exponential>) {
          os << "exponential(V0=" << k.v0 << " V, dV=" << k.dv << " V, lambda=" << k.lambda
             << " m)";
        } else if constexpr (std::is_same_v<T, Logarithmic>) {
          os << "logarithmic(Vlog=" << k.vlog << " V, dVlog=" << k.dvlog
             << " V, Lambda=" << k.scale << " m)";
        } else if constexpr (std::is_same_v<T, Tabulated>) {
          os << "tabulated[" << k.spline.x_min() << ", " << k.spline.x_max() << "] m";
        } else {
          os << "ode-table[" << k.x.front() << ", " << k.x.back() << "] m";
        }
      },
      kind_);
  return os.str();
}

}  // namespace spforce
