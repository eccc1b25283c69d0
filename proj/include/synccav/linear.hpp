#pragma once

#include <optional>
#include <string>
#include <vector>

namespace synccav {

// Branching classes, in the fixed order the solver visits them.
enum class VarClass { Continuous = 0, Gamma = 1, Rho = 2, Eta = 3, Phi = 4, Aux = 5 };

struct Term {
  int var;
  double coef;
};

// Affine expression over the variables of one LinearConstraintSet.
struct Affine {
  std::vector<Term> terms;
  double constant = 0.0;

  Affine() = default;
  explicit Affine(double c) : constant(c) {}
  static Affine var(int v, double coef = 1.0) {
    Affine a;
    a.terms.push_back({v, coef});
    return a;
  }
  Affine& operator+=(const Affine& o);
  Affine& operator-=(const Affine& o);
  Affine& operator*=(double s);
  double eval(const std::vector<double>& x) const;
  void compress();  // merge duplicate variables, drop zeros
};

Affine operator+(Affine a, const Affine& b);
Affine operator-(Affine a, const Affine& b);
Affine operator*(double s, Affine a);
Affine operator+(Affine a, double c);
Affine operator-(Affine a, double c);

enum class Sense { LE, GE, EQ };

// Optional convex term coef * (arg)^2 on the row's left-hand side.
struct QuadTerm {
  Affine arg;
  double coef = 0.0;
};

struct Row {
  std::string name;
  Affine lhs;  // constant folded into rhs on insertion
  Sense sense = Sense::LE;
  double rhs = 0.0;
  std::optional<QuadTerm> quad;
};

struct VarDecl {
  std::string name;
  double lb = 0.0;
  double ub = 1.0;
  bool binary = false;
  VarClass cls = VarClass::Continuous;
  int key0 = 0;  // tie-break keys for deterministic ordering (vehicle id, step, ...)
  int key1 = 0;
};

class LinearConstraintSet {
 public:
  double big_m = 0.0;
  std::vector<VarDecl> vars;
  std::vector<Row> rows;

  int add_continuous(const std::string& name, double lb, double ub);
  int add_binary(const std::string& name, VarClass cls, int key0 = 0, int key1 = 0);
  // Adds lhs (sense) rhs; the constant of lhs is moved to the right-hand side.
  void add_row(const std::string& name, Affine lhs, Sense sense, double rhs);
  void add_quad_row(const std::string& name, Affine lhs, QuadTerm quad, Sense sense, double rhs);

  int num_binaries() const;
  double row_lhs(const Row& r, const std::vector<double>& x) const;
  // Positive amount by which the row is violated at x (0 if satisfied).
  double violation(const Row& r, const std::vector<double>& x) const;
  double max_violation(const std::vector<double>& x) const;
  // Plain-text LP-style dump: one line per row with name, coefficients, sense and rhs.
  std::string dump() const;
};

}  // namespace synccav
