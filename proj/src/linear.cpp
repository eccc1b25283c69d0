#include "synccav/linear.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace synccav {

Affine& Affine::operator+=(const Affine& o) {
  terms.insert(terms.end(), o.terms.begin(), o.terms.end());
  constant += o.constant;
  return *this;
}

Affine& Affine::operator-=(const Affine& o) {
  for (const auto& t : o.terms) terms.push_back({t.var, -t.coef});
  constant -= o.constant;
  return *this;
}

Affine& Affine::operator*=(double s) {
  for (auto& t : terms) t.coef *= s;
  constant *= s;
  return *this;
}

double Affine::eval(const std::vector<double>& x) const {
  double s = constant;
  for (const auto& t : terms) s += t.coef * x[t.var];
  return s;
}

void Affine::compress() {
  std::map<int, double> acc;
  for (const auto& t : terms) acc[t.var] += t.coef;
  terms.clear();
  for (const auto& [v, c] : acc)
    if (c != 0.0) terms.push_back({v, c});
}

Affine operator+(Affine a, const Affine& b) { return a += b; }
Affine operator-(Affine a, const Affine& b) { return a -= b; }
Affine operator*(double s, Affine a) { return a *= s; }
Affine operator+(Affine a, double c) {
  a.constant += c;
  return a;
}
Affine operator-(Affine a, double c) {
  a.constant -= c;
  return a;
}

int LinearConstraintSet::add_continuous(const std::string& name, double lb, double ub) {
  vars.push_back({name, lb, ub, false, VarClass::Continuous, 0, 0});
  return static_cast<int>(vars.size()) - 1;
}

int LinearConstraintSet::add_binary(const std::string& name, VarClass cls, int key0, int key1) {
  vars.push_back({name, 0.0, 1.0, true, cls, key0, key1});
  return static_cast<int>(vars.size()) - 1;
}

void LinearConstraintSet::add_row(const std::string& name, Affine lhs, Sense sense, double rhs) {
  lhs.compress();
  Row r;
  r.name = name;
  r.rhs = rhs - lhs.constant;
  lhs.constant = 0.0;
  r.lhs = std::move(lhs);
  r.sense = sense;
  rows.push_back(std::move(r));
}

void LinearConstraintSet::add_quad_row(const std::string& name, Affine lhs, QuadTerm quad, Sense sense, double rhs) {
  add_row(name, std::move(lhs), sense, rhs);
  quad.arg.compress();
  rows.back().quad = std::move(quad);
}

int LinearConstraintSet::num_binaries() const {
  return static_cast<int>(std::count_if(vars.begin(), vars.end(), [](const VarDecl& v) { return v.binary; }));
}

double LinearConstraintSet::row_lhs(const Row& r, const std::vector<double>& x) const {
  double s = r.lhs.eval(x);
  if (r.quad) {
    double a = r.quad->arg.eval(x);
    s += r.quad->coef * a * a;
  }
  return s;
}

double LinearConstraintSet::violation(const Row& r, const std::vector<double>& x) const {
  double s = row_lhs(r, x);
  switch (r.sense) {
    case Sense::LE: return std::max(0.0, s - r.rhs);
    case Sense::GE: return std::max(0.0, r.rhs - s);
    case Sense::EQ: return std::abs(s - r.rhs);
  }
  return 0.0;
}

double LinearConstraintSet::max_violation(const std::vector<double>& x) const {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, violation(r, x));
  return m;
}

std::string LinearConstraintSet::dump() const {
  std::ostringstream os;
  char buf[64];
  os << "\\ variables " << vars.size() << " rows " << rows.size() << " bigM ";
  std::snprintf(buf, sizeof buf, "%.6g", big_m);
  os << buf << "\n";
  for (const auto& r : rows) {
    os << r.name << ":";
    for (const auto& t : r.lhs.terms) {
      std::snprintf(buf, sizeof buf, " %+.9g", t.coef);
      os << buf << " " << vars[t.var].name;
    }
    if (r.quad) {
      std::snprintf(buf, sizeof buf, " %+.9g", r.quad->coef);
      os << buf << " [";
      for (const auto& t : r.quad->arg.terms) {
        std::snprintf(buf, sizeof buf, " %+.9g", t.coef);
        os << buf << " " << vars[t.var].name;
      }
      std::snprintf(buf, sizeof buf, " %+.9g", r.quad->arg.constant);
      os << buf << " ]^2";
    }
    os << (r.sense == Sense::LE ? " <= " : r.sense == Sense::GE ? " >= " : " = ");
    std::snprintf(buf, sizeof buf, "%.9g", r.rhs);
    os << buf << "\n";
  }
  os << "bounds\n";
  for (const auto& v : vars) {
    std::snprintf(buf, sizeof buf, "%.9g <= ", v.lb);
    os << " " << buf << v.name;
    std::snprintf(buf, sizeof buf, " <= %.9g", v.ub);
    os << buf << (v.binary ? " binary" : "") << "\n";
  }
  return os.str();
}

}  // namespace synccav
