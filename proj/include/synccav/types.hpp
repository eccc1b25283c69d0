#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace synccav {

enum class VehicleClass { SubjectCav, NeighborCav, Hdv };

const char* to_string(VehicleClass c);
VehicleClass vehicle_class_from_string(const std::string& s);

struct Kinematics2D {
  double x = 0.0;   // longitudinal position (m)
  double y = 0.0;   // lateral position (m)
  double vx = 0.0;  // m/s
  double vy = 0.0;  // m/s
};

struct ControlInput2D {
  double ux = 0.0;  // m/s^2
  double uy = 0.0;  // m/s^2
};

struct VehicleParams {
  double length = 5.0;               // L (m)
  double reaction_time = 1.0;        // tau (s)
  double newell_displacement = 5.0;  // d (m)
  std::optional<double> cacc_k1;     // 1/s^2
  std::optional<double> cacc_k2;     // 1/s
  std::optional<double> cacc_time_gap;  // t_d (s)
};

struct LimitSet {
  double v_min = 10.0;
  double v_max = 33.33;
  double a_min = -6.0;
  double a_max = 8.0;
  double vy_max = 1.5;
  double ay_max = 1.0;
};

struct Lane {
  double lower_y = 0.0;
  double upper_y = 3.6;
};

struct LaneGeometry {
  std::vector<Lane> lanes;

  static LaneGeometry uniform(int count, double width);
  int count() const { return static_cast<int>(lanes.size()); }
  double lower() const { return lanes.front().lower_y; }
  double upper() const { return lanes.back().upper_y; }
  double width() const { return upper() - lower(); }
  double center(int lane) const { return 0.5 * (lanes[lane].lower_y + lanes[lane].upper_y); }
};

struct CtmParams {
  double q_max = 2000.0;  // veh/h
  double k_jam = 0.12;    // veh/m
  double wave_speed = 6.0;  // m/s
};

enum class Phase { CatchUp, Platoon };  // q1, q2

const char* to_string(Phase p);

struct Vehicle {
  int id = 0;
  VehicleClass cls = VehicleClass::Hdv;
  Kinematics2D state;
  VehicleParams params;
};

struct WeightBase {
  double q_u = 0.1;
  double q_v = 0.1;
  double q_y = 0.1;
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  double xi_max = 10.0;
};

struct ScenarioConfig {
  LaneGeometry geometry = LaneGeometry::uniform(3, 3.6);
  std::vector<Vehicle> vehicles;
  LimitSet limits;
  double dt = 1.0;       // delta (s)
  int horizon = 5;       // T (steps)
  double cell_length = 40.0;  // Delta L (m)
  double road_length = 6000.0;  // m
  CtmParams ctm;
  double desired_spacing = 20.0;  // d~ (m)
  WeightBase weights;
  double monitoring_range = 150.0;  // m
  double big_m = 0.0;  // 0 means road length
  std::vector<double> initial_flow;  // per lane veh/h, uniform over cells (optional)
  double inflow = 0.0;               // boundary inflow veh/h per lane
};

struct ValidationError : std::runtime_error {
  std::vector<std::string> messages;
  explicit ValidationError(std::vector<std::string> msgs);
};

}  // namespace synccav
