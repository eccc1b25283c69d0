#pragma once

#include <vector>

#include "synccav/linear.hpp"
#include "synccav/types.hpp"

namespace synccav::relations {

// Strictness margin used to encode the strict inequalities of the indicator definitions.
inline constexpr double kStrictEps = 1e-6;

// Lane index (0-based) with lower < y <= upper; the lowest lane also owns its lower edge.
int eval_lane_membership(double y, const LaneGeometry& geometry);

// rho per lane: 1 iff both vehicles sit in that lane and a.x < b.x (b downstream of a).
std::vector<int> eval_downstream(const Kinematics2D& a, const Kinematics2D& b, const LaneGeometry& geometry);

struct FollowingMap {
  int n = 0;
  int lanes = 0;
  std::vector<char> bits;  // [(j*n + j2)*lanes + l]
  bool tie_warning = false;  // two vehicles share x in one lane

  int at(int j, int j2, int l) const { return bits[(static_cast<std::size_t>(j) * n + j2) * lanes + l]; }
  bool follows(int j, int j2) const;  // any lane
  int leader_of(int j) const;         // -1 if none
};

// eta: j immediately follows j2 in lane l (j2 downstream, nobody strictly between).
FollowingMap eval_following(const std::vector<Kinematics2D>& states, const LaneGeometry& geometry);

struct CellGrid {
  double cell_length = 40.0;
  int cells = 1;
  double extent() const { return cell_length * cells; }
  double lower(int c) const { return c * cell_length; }
  double upper(int c) const { return (c + 1) * cell_length; }
};

struct CellIndex {
  int lane = 0;
  int cell = 0;
  bool operator==(const CellIndex&) const = default;
};

// Cells are (lower, upper]; the first cell also owns x = 0. Boundary points go to the lower cell.
int eval_cell(double x, const CellGrid& grid);
CellIndex eval_cell_membership(const Kinematics2D& state, const LaneGeometry& geometry, const CellGrid& grid);

struct RelationSnapshot {
  int n = 0;
  int lanes = 0;
  int step = 0;
  std::vector<int> lane;  // gamma as lane index per vehicle
  std::vector<char> rho;  // [(j*n+j2)*lanes+l]
  std::vector<char> eta;  // same layout
  std::vector<char> xi;   // [((j*n+j2)*n+k)*lanes+l]
  std::vector<char> delta;  // [(j*n+j2)*lanes+l]
  std::vector<CellIndex> cell;
  bool tie_warning = false;

  int gamma(int j, int l) const { return lane[j] == l ? 1 : 0; }
  int rho_at(int j, int j2, int l) const { return rho[(static_cast<std::size_t>(j) * n + j2) * lanes + l]; }
  int eta_at(int j, int j2, int l) const { return eta[(static_cast<std::size_t>(j) * n + j2) * lanes + l]; }
  int xi_at(int j, int j2, int k, int l) const {
    return xi[((static_cast<std::size_t>(j) * n + j2) * n + k) * lanes + l];
  }
  int delta_at(int j, int j2, int l) const { return delta[(static_cast<std::size_t>(j) * n + j2) * lanes + l]; }
  int phi(int j, int l, int c) const { return cell[j].lane == l && cell[j].cell == c ? 1 : 0; }
};

RelationSnapshot eval_snapshot(const std::vector<Kinematics2D>& states, const LaneGeometry& geometry,
                               const CellGrid& grid, int step = 0);

// ---- big-M row families, written over affine expressions so that callers may pass
// decision variables or constants ----

// Lane membership of a lateral coordinate: gamma = 1 forces y into lane l.
void add_lane_rows(LinearConstraintSet& s, const std::string& tag, const Affine& y, const Affine& gamma,
                   const LaneGeometry& geometry, int l, double M);
// rho_{j,j2}^l from x_j < x_j2 and both lane memberships.
void add_downstream_rows(LinearConstraintSet& s, const std::string& tag, const Affine& xj, const Affine& xj2,
                         const Affine& gj, const Affine& gj2, const Affine& rho, double M);
// xi = rho_jk AND rho_kj2.
void add_between_rows(LinearConstraintSet& s, const std::string& tag, const Affine& xi, const Affine& rho_jk,
                      const Affine& rho_kj2);
// eta from rho and the between indicators through the auxiliary delta.
void add_following_rows(LinearConstraintSet& s, const std::string& tag, const Affine& eta, const Affine& delta,
                        const Affine& rho, const std::vector<Affine>& xis, double M);
// phi = 1 forces the coordinate into [lo, hi] (lower bound strict unless first interval).
void add_interval_rows(LinearConstraintSet& s, const std::string& tag, const Affine& coord, const Affine& phi,
                       double lo, double hi, bool lower_strict, double M);

struct RosterEntry {
  int id = 0;
  bool subject = false;
};

struct EncodedRelations {
  LinearConstraintSet set;
  int n = 0, lanes = 0, cells = 0, horizon = 0;
  std::vector<int> x, y, gamma, rho, xi, delta, eta, phi;  // variable indices, see accessors

  int x_var(int j, int t) const { return x[t * n + j]; }
  int y_var(int j, int t) const { return y[t * n + j]; }
  int gamma_var(int j, int l, int t) const { return gamma[(t * n + j) * lanes + l]; }
  int rho_var(int j, int j2, int l, int t) const { return rho[((t * n + j) * n + j2) * lanes + l]; }
  int xi_var(int j, int j2, int k, int l, int t) const { return xi[(((t * n + j) * n + j2) * n + k) * lanes + l]; }
  int delta_var(int j, int j2, int l, int t) const { return delta[((t * n + j) * n + j2) * lanes + l]; }
  int eta_var(int j, int j2, int l, int t) const { return eta[((t * n + j) * n + j2) * lanes + l]; }
  int phi_var(int j, int l, int c, int t) const { return phi[((t * n + j) * lanes + l) * cells + c]; }

  // Full variable assignment matching eval_snapshot at each step's states.
  std::vector<double> assignment(const std::vector<std::vector<Kinematics2D>>& states_per_step,
                                 const LaneGeometry& geometry, const CellGrid& grid) const;
};

// Emits the big-M indicator encoding for every step 1..horizon (index t = 0..horizon-1).
// Throws std::invalid_argument when M does not dominate the coordinate ranges.
EncodedRelations encode_relations_bigM(const std::vector<RosterEntry>& roster, const LaneGeometry& geometry,
                                       const CellGrid& grid, int horizon, double M);

}  // namespace synccav::relations
