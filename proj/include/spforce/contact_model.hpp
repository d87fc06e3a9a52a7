#ifndef SPFORCE_CONTACT_MODEL_HPP
#define SPFORCE_CONTACT_MODEL_HPP

#include <string>
#include <variant>
#include <vector>

namespace spforce {

/// Natural cubic spline, C^2, used for tabulated potential laws; evaluation
/// outside the knot range is rejected.
class CubicSpline {
 public:
  CubicSpline() = default;
  CubicSpline(std::vector<double> x, std::vector<double> y);

  double value(double x) const;
  double derivative(double x) const;
  double second_derivative(double x) const;
  double x_min() const { return x_.front(); }
  double x_max() const { return x_.back(); }

 private:
  std::size_t interval(double x) const;
  std::vector<double> x_, y_, m_;  // m_: second derivatives at the knots
};

/// A scalar potential law versus distance, used both for the contact
/// potential V_c(x) and for the minimizing potential V_0(x). All variants are
/// twice differentiable on their domain.
class ContactPotentialModel {
 public:
  struct Constant {
    double value;  // V
  };
  struct Exponential {  // V0 + dV (1 - exp(-x/lambda))
    double v0, dv, lambda;
  };
  struct Logarithmic {  // Vlog + dVlog ln(x/Lambda)
    double vlog, dvlog, scale;
  };
  struct Tabulated {  // spline through measured (x, V) points
    CubicSpline spline;
  };
  struct HermiteTable {  // nodes carrying exact value and first two derivatives
    std::vector<double> x, v, v1, v2;
  };

  struct Eval {
    double v;   // V
    double v1;  // dV/dx  (V/m)
    double v2;  // d2V/dx2 (V/m^2)
  };

  static ContactPotentialModel constant(double value);
  static ContactPotentialModel exponential(double v0, double dv, double lambda);
  static ContactPotentialModel logarithmic(double vlog, double dvlog, double scale);
  static ContactPotentialModel tabulated(std::vector<double> x, std::vector<double> v);
  static ContactPotentialModel hermite_table(std::vector<double> x, std::vector<double> v,
                                             std::vector<double> v1, std::vector<double> v2);

  Eval eval(double x) const;
  double value(double x) const { return eval(x).v; }

  bool is_constant() const { return std::holds_alternative<Constant>(kind_); }
  const std::variant<Constant, Exponential, Logarithmic, Tabulated, HermiteTable>& kind() const {
    return kind_;
  }
  std::string describe() const;

 private:
  std::variant<Constant, Exponential, Logarithmic, Tabulated, HermiteTable> kind_;
};

}  // namespace spforce

#endif
