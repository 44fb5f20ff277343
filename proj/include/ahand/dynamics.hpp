#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ahand/geom.hpp"
#include "ahand/rng.hpp"

namespace ahand {

// Planar wrench: force (N) + torque (N*m).
struct Wrench {
  Vec2 force;
  double torque = 0.0;
};

// Two-link tool with an internal revolute joint. Link frames share their
// origin at the joint; link i occupies the capsule segment
// [seg_starts_i, length_i] along its local x axis. Link 2 is counterbalanced:
// a short tail behind the pivot puts its COM near the joint, so gravity
// exerts almost no articulation torque (as in a balanced instrument).
struct ToolModel {
  std::array<double, 2> link_lengths{0.16, 0.16};
  std::array<double, 2> seg_starts{0.0, -0.04};
  std::array<double, 2> link_masses{0.20, 0.20};
  std::array<double, 2> link_inertias{4.27e-4, 1.2e-3};  // about COM
  std::array<double, 2> com_offsets{0.08, 0.02};         // joint->COM along link axis
  double link_radius = 0.012;

  double joint_spring_k = 0.08;     // N*m/rad
  double joint_spring_rest = 1.8;   // rad, preloaded open
  double joint_damping = 0.05;      // N*m*s/rad
  double joint_coulomb = 0.003;     // N*m
  double joint_stiction = 0.006;    // N*m, breakaway, >= coulomb
  double backlash_halfwidth = 0.005;  // rad
  double theta_lo = 0.0;
  double theta_hi = 0.8;
  double link_friction_mu = 1.0;

  std::array<Vec2, 2> tip_offsets{Vec2{0.16, 0.0}, Vec2{0.16, 0.0}};

  void validate() const {
    for (int i = 0; i < 2; ++i) {
      if (!(link_lengths[i] > 0) || !(link_masses[i] > 0) || !(link_inertias[i] > 0))
        throw std::invalid_argument("ToolModel: masses, inertias, lengths must be positive");
      if (!(seg_starts[i] < link_lengths[i]))
        throw std::invalid_argument("ToolModel: seg_starts must precede link ends");
    }
    if (!(joint_stiction >= joint_coulomb) || !(joint_coulomb >= 0))
      throw std::invalid_argument("ToolModel: need joint_stiction >= joint_coulomb >= 0");
    if (!(theta_lo < theta_hi)) throw std::invalid_argument("ToolModel: need theta_lo < theta_hi");
    if (!(backlash_halfwidth >= 0) || !(backlash_halfwidth < 0.25 * (theta_hi - theta_lo)))
      throw std::invalid_argument("ToolModel: backlash_halfwidth out of range");
    if (!(link_friction_mu >= 0)) throw std::invalid_argument("ToolModel: negative friction");
  }
};

struct ToolState {
  Vec2 base_pos;           // world position of the tool joint (link-1 frame origin)
  double base_ang = 0.0;   // orientation of link 1
  Vec2 base_vel;
  double base_angvel = 0.0;
  double theta_art = 0.0;      // link 2 angle relative to link 1
  double theta_art_dot = 0.0;
  double backlash_engagement = 0.0;  // in [-halfwidth, halfwidth]

  Pose2 link_pose(int link) const {
    return {base_pos, link == 0 ? base_ang : base_ang + theta_art};
  }
};

// One finger: a 1-DoF lever carrying a circular pad. The pad center sweeps a
// circle of radius `arm` around `base` (given in the hand-mount frame); the
// lever angle is mount_angle + dir_sign * q.
struct PadLever {
  Vec2 base;
  double arm = 0.05;
  double mount_angle = 0.0;
  double dir_sign = 1.0;
};

struct HandModel {
  int n_joints = 6;
  std::vector<double> pad_radii;
  std::vector<PadLever> pads;
  double pd_kp = 20.0;
  double pd_kd = 0.1;
  double torque_limit = 1.5;
  double joint_inertia = 0.004;   // effective lever inertia about its axis
  double joint_damping = 0.35;    // gear-train bearing drag, integrated implicitly
  double pad_stiffness = 1200.0;  // N/m (foam-faced pads)
  double pad_damping = 16.0;      // N*s/m
  double pad_friction_mu = 1.0;
  double pad_shear_stiffness = 1200.0;  // N/m, stick-spring friction
  double pad_shear_damping = 8.0;       // N*s/m
  double spring_return_k = 0.05;     // passive extension spring
  double spring_return_rest = -0.4;  // rad, toward extension
  std::vector<double> q_lo, q_hi;

  void validate() const {
    if (n_joints <= 0) throw std::invalid_argument("HandModel: n_joints must be positive");
    auto need = [&](std::size_t n, const char* what) {
      if (n != static_cast<std::size_t>(n_joints))
        throw std::invalid_argument(std::string("HandModel: ") + what + " size != n_joints");
    };
    need(pad_radii.size(), "pad_radii");
    need(pads.size(), "pads");
    need(q_lo.size(), "q_lo");
    need(q_hi.size(), "q_hi");
    if (!(pd_kp > 0) || !(pd_kd > 0) || !(torque_limit > 0) || !(joint_inertia > 0) ||
        !(pad_stiffness > 0) || !(pad_damping >= 0) || !(pad_friction_mu >= 0) || !(joint_damping >= 0) ||
        !(spring_return_k >= 0))
      throw std::invalid_argument("HandModel: gains and limits must be positive");
  }
};

struct HandState {
  std::vector<double> q, q_dot;
};

// The hand mount is a compliant base: a mass on a stiff spring pulled toward
// a nominal pose. Wrench perturbations and bench trajectories act on it.
// Contact reactions do not move it (the arm holding the hand is stiff).
struct MountModel {
  double mass = 2.0;
  double inertia = 0.05;
  double lin_stiffness = 3000.0;
  double lin_damping = 110.0;
  double ang_stiffness = 200.0;
  double ang_damping = 14.0;
};

struct MountState {
  Vec2 pos;
  double ang = 0.0;
  Vec2 vel;
  double angvel = 0.0;
  Vec2 nominal_pos;
  double nominal_ang = 0.0;

  Pose2 pose() const { return {pos, ang}; }
};

struct Contact {
  int pad_index = 0;
  int link_index = 1;  // 1 or 2
  Vec2 point;
  Vec2 normal;  // from tool surface toward the pad
  double normal_force = 0.0;
  double tangential_force = 0.0;
  double penetration = 0.0;
  bool slipping = false;
};

struct SimParams {
  ToolModel tool;
  HandModel hand;
  MountModel mount;
  double gravity = 9.81;
  double dt = 1.0 / 120.0;
  double stiction_vel_eps = 1e-4;  // rad/s, below this the joint can stick
  // Actuation-side transmission (identity in the sim profile).
  double act_gain = 1.0;
  double act_deadband = 0.0;
};

// Per-(pad, link) friction anchor: the stuck material point on the link, in
// link-local coordinates. Friction is a tangential spring against this
// anchor, clamped to the cone; the anchor trails when sliding. This is the
// displacement-regularized Coulomb model (velocity regularization cannot
// hold statics without creep).
struct FrictionAnchor {
  bool active = false;
  Vec2 local;
};

struct SimState {
  ToolState tool;
  HandState hand;
  MountState mount;
  std::vector<FrictionAnchor> anchors;  // size n_joints * 2, lazily sized

  void ensure_anchors(int n_joints) {
    if (anchors.size() != static_cast<std::size_t>(n_joints) * 2)
      anchors.assign(static_cast<std::size_t>(n_joints) * 2, FrictionAnchor{});
  }
};

struct StepResult {
  std::vector<Contact> contacts;
  std::vector<double> tau_raw;
};

class integration_error : public std::runtime_error {
 public:
  integration_error(int step_index, const std::string& what)
      : std::runtime_error("integration failure at step " + std::to_string(step_index) + ": " + what),
        step_index_(step_index) {}
  int step_index() const { return step_index_; }

 private:
  int step_index_;
};

class grasp_init_error : public std::runtime_error {
 public:
  explicit grasp_init_error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline bool finite(double v) { return std::isfinite(v); }

// Solve a small symmetric positive definite system in place (Gaussian
// elimination with partial pivoting; n is 3 or 4 here).
template <int N>
inline void solve_linear(double A[N][N], double b[N], double x[N]) {
  int piv[N];
  for (int i = 0; i < N; ++i) piv[i] = i;
  for (int c = 0; c < N; ++c) {
    int best = c;
    for (int r = c + 1; r < N; ++r)
      if (std::fabs(A[r][c]) > std::fabs(A[best][c])) best = r;
    if (best != c) {
      for (int k = 0; k < N; ++k) std::swap(A[c][k], A[best][k]);
      std::swap(b[c], b[best]);
    }
    const double d = A[c][c];
    for (int r = c + 1; r < N; ++r) {
      const double f = A[r][c] / d;
      for (int k = c; k < N; ++k) A[r][k] -= f * A[c][k];
      b[r] -= f * b[c];
    }
  }
  for (int r = N - 1; r >= 0; --r) {
    double s = b[r];
    for (int k = r + 1; k < N; ++k) s -= A[r][k] * x[k];
    x[r] = s / A[r][r];
  }
}

struct PadKinematics {
  Vec2 center;
  Vec2 vel;
  Vec2 dcenter_dq;  // world-frame derivative of center wrt q
};

inline PadKinematics pad_kinematics(const HandModel& hand, const MountState& mount, int j,
                                    double q, double q_dot) {
  const PadLever& pad = hand.pads[j];
  const double a = pad.mount_angle + pad.dir_sign * q;
  const Vec2 local = pad.base + pad.arm * dir(a);
  const Vec2 dlocal_dq = pad.arm * pad.dir_sign * dir(a).perp();
  PadKinematics k;
  k.center = mount.pose().apply(local);
  k.dcenter_dq = mount.pose().apply_dir(dlocal_dq);
  const Vec2 r = k.center - mount.pos;
  k.vel = mount.vel + mount.angvel * r.perp() + k.dcenter_dq * q_dot;
  return k;
}

}  // namespace detail

// Tool-tip separation in millimeters.
inline double tip_separation(const ToolState& tool, const ToolModel& model) {
  const Vec2 t1 = tool.link_pose(0).apply(model.tip_offsets[0]);
  const Vec2 t2 = tool.link_pose(1).apply(model.tip_offsets[1]);
  return (t2 - t1).norm() * 1000.0;
}

// Height of the tool joint point (meters).
inline double object_height(const ToolState& tool) { return tool.base_pos.y; }

// One semi-implicit Euler substep at params.dt.
//
// targets:        PD joint targets, one per hand joint (radians)
// ext_tool:       external wrench on link 1, force acting at the joint point
// ext_mount:      external wrench on the hand mount
// mech_torque:    extra torque injected through the joint mechanism path
//                 (transmitted only when the backlash engagement is at its
//                 boundary); used by scripted joint tests, zero in normal use
inline StepResult step_physics(SimState& s, const std::vector<double>& targets,
                               const Wrench& ext_tool, const Wrench& ext_mount,
                               const SimParams& p, int step_index, double mech_torque = 0.0) {
  const ToolModel& tm = p.tool;
  const HandModel& hm = p.hand;
  const int D = hm.n_joints;
  if (static_cast<int>(targets.size()) != D)
    throw std::invalid_argument("step_physics: targets size != n_joints");
  const double dt = p.dt;

  ToolState& tool = s.tool;
  HandState& hand = s.hand;
  MountState& mount = s.mount;

  const double phi = tool.base_ang;
  const double sig = tool.base_ang + tool.theta_art;
  const double a1 = tm.com_offsets[0], a2 = tm.com_offsets[1];
  const double m1 = tm.link_masses[0], m2 = tm.link_masses[1];
  const double I1 = tm.link_inertias[0], I2 = tm.link_inertias[1];

  // --- PD torques (tau_raw is the clean PD signal; actuation may distort it)
  StepResult out;
  out.tau_raw.resize(D);
  std::vector<double> tau_act(D);
  for (int j = 0; j < D; ++j) {
    const double spring_return = -hm.spring_return_k * (hand.q[j] - hm.spring_return_rest);
    double tau = hm.pd_kp * (targets[j] - hand.q[j]) - hm.pd_kd * hand.q_dot[j] + spring_return;
    tau = std::clamp(tau, -hm.torque_limit, hm.torque_limit);
    out.tau_raw[j] = tau;
    // soft deadband then gain
    double t = std::fabs(tau) <= p.act_deadband ? 0.0 : tau - std::copysign(p.act_deadband, tau);
    tau_act[j] = p.act_gain * t;
  }

  // --- contacts: pad circles vs link capsules
  s.ensure_anchors(D);
  double F[4] = {0, 0, 0, 0};  // generalized force on (x, y, phi, theta)
  std::vector<double> tau_contact(D, 0.0);
  const double mu = std::sqrt(hm.pad_friction_mu * tm.link_friction_mu);

  for (int j = 0; j < D; ++j) {
    const auto pk = detail::pad_kinematics(hm, mount, j, hand.q[j], hand.q_dot[j]);
    for (int link = 0; link < 2; ++link) {
      FrictionAnchor& anchor = s.anchors[static_cast<std::size_t>(j) * 2 + link];
      const Pose2 pose = tool.link_pose(link);
      const Vec2 seg_a = pose.apply({tm.seg_starts[link], 0.0});
      const Vec2 seg_b = pose.apply({tm.link_lengths[link], 0.0});
      const double t = closest_param_on_segment(pk.center, seg_a, seg_b);
      const Vec2 closest = seg_a + t * (seg_b - seg_a);
      const Vec2 d = pk.center - closest;
      const double dist = d.norm();
      const double pen = hm.pad_radii[j] + tm.link_radius - dist;
      if (pen <= 0.0 || dist <= 1e-12) {
        anchor.active = false;
        continue;
      }

      const Vec2 n = d * (1.0 / dist);  // tool surface -> pad
      const Vec2 tdir = n.perp();
      const Vec2 r = closest - tool.base_pos;

      // velocity of the tool material point at `closest`
      const double w_link = link == 0 ? tool.base_angvel : tool.base_angvel + tool.theta_art_dot;
      const Vec2 v_tool = tool.base_vel + w_link * r.perp();
      const Vec2 v_rel = v_tool - pk.vel;

      // penetration rate: positive when approaching
      const double pen_rate = v_rel.dot(n);
      double fn = hm.pad_stiffness * pen + hm.pad_damping * pen_rate;
      if (fn <= 0.0) {
        anchor.active = false;
        continue;
      }

      // stick-spring friction against the anchored material point
      if (!anchor.active) {
        anchor.active = true;
        anchor.local = pose.inv_apply(closest);
      }
      // Spring stretch is the link material point's departure from the grip
      // point: force on the tool pulls the anchored material back under the
      // pad (and drags the tool along when the pad itself moves).
      const Vec2 anchor_world = pose.apply(anchor.local);
      const double slip = tdir.dot(closest - anchor_world);
      const double vt = v_rel.dot(tdir);
      double ft = hm.pad_shear_stiffness * slip - hm.pad_shear_damping * vt;  // on the tool
      const double cap = mu * fn;
      bool slipping = false;
      if (ft > cap) {
        ft = cap;
        slipping = true;
      } else if (ft < -cap) {
        ft = -cap;
        slipping = true;
      }
      if (slipping) {
        // let the anchor trail so the spring holds exactly the cone force
        const double slip_hold = (ft + hm.pad_shear_damping * vt) / hm.pad_shear_stiffness;
        anchor.local = pose.inv_apply(closest - slip_hold * tdir);
      }

      const Vec2 f_tool = -fn * n + ft * tdir;
      F[0] += f_tool.x;
      F[1] += f_tool.y;
      const double torque = r.cross(f_tool);
      F[2] += torque;
      if (link == 1) F[3] += torque;

      // reaction on the finger through the lever arm
      tau_contact[j] += pk.dcenter_dq.dot(-1.0 * f_tool);

      Contact c;
      c.pad_index = j;
      c.link_index = link + 1;
      c.point = closest + tm.link_radius * n;
      c.normal = n;
      c.normal_force = fn;
      c.tangential_force = ft;
      c.penetration = pen;
      c.slipping = slipping;
      out.contacts.push_back(c);
    }
  }

  // --- gravity and external wrench on the tool
  const double cphi = std::cos(phi), sphi = std::sin(phi);
  const double csig = std::cos(sig), ssig = std::sin(sig);
  F[1] -= (m1 + m2) * p.gravity;
  F[2] -= p.gravity * (m1 * a1 * cphi + m2 * a2 * csig);
  F[3] -= p.gravity * m2 * a2 * csig;
  F[0] += ext_tool.force.x;
  F[1] += ext_tool.force.y;
  F[2] += ext_tool.torque;

  // --- joint mechanism. Viscous pivot damping acts always; the spring,
  // Coulomb/stiction friction, and any injected mechanism torque transmit
  // only while the backlash engagement sits at a boundary.
  const double w = tm.backlash_halfwidth;
  const double e = tool.backlash_engagement;
  const bool engaged = std::fabs(e) >= w - 1e-12;
  F[3] -= tm.joint_damping * tool.theta_art_dot;
  bool lock_theta = false;
  if (engaged) {
    const double spring = -tm.joint_spring_k * (tool.theta_art - e - tm.joint_spring_rest);
    F[3] += spring + mech_torque;

    if (std::fabs(tool.theta_art_dot) < p.stiction_vel_eps) {
      // Try a locked joint: solve the 3x3 system with theta fixed, then check
      // whether stiction can supply the holding torque.
      const double om_phi = tool.base_angvel;
      double M3[3][3] = {
          {m1 + m2, 0.0, -(m1 * a1 * sphi + m2 * a2 * ssig)},
          {0.0, m1 + m2, m1 * a1 * cphi + m2 * a2 * csig},
          {-(m1 * a1 * sphi + m2 * a2 * ssig), m1 * a1 * cphi + m2 * a2 * csig,
           m1 * a1 * a1 + I1 + m2 * a2 * a2 + I2}};
      // bias with theta_dot = 0
      const double b0 = -m1 * a1 * cphi * om_phi * om_phi - m2 * a2 * csig * om_phi * om_phi;
      const double b1 = -m1 * a1 * sphi * om_phi * om_phi - m2 * a2 * ssig * om_phi * om_phi;
      double rhs[3] = {F[0] - b0, F[1] - b1, F[2]};
      double acc3[3];
      detail::solve_linear<3>(M3, rhs, acc3);
      const double m41 = -m2 * a2 * ssig, m42 = m2 * a2 * csig, m43 = m2 * a2 * a2 + I2;
      const double lambda = m41 * acc3[0] + m42 * acc3[1] + m43 * acc3[2] - F[3];
      if (std::fabs(lambda) <= tm.joint_stiction) {
        tool.base_vel += Vec2{acc3[0], acc3[1]} * dt;
        tool.base_angvel += acc3[2] * dt;
        tool.theta_art_dot = 0.0;
        lock_theta = true;
      } else {
        F[3] += std::copysign(tm.joint_coulomb, lambda);  // breakaway
      }
    } else {
      F[3] -= std::copysign(tm.joint_coulomb, tool.theta_art_dot);
    }
  }

  if (!lock_theta) {
    const double om = tool.base_angvel + tool.theta_art_dot;
    // pivot viscosity handled implicitly: (M + dt C) a = F - b - C v
    double M4[4][4] = {
        {m1 + m2, 0.0, -(m1 * a1 * sphi + m2 * a2 * ssig), -m2 * a2 * ssig},
        {0.0, m1 + m2, m1 * a1 * cphi + m2 * a2 * csig, m2 * a2 * csig},
        {-(m1 * a1 * sphi + m2 * a2 * ssig), m1 * a1 * cphi + m2 * a2 * csig,
         m1 * a1 * a1 + I1 + m2 * a2 * a2 + I2, m2 * a2 * a2 + I2},
        {-m2 * a2 * ssig, m2 * a2 * csig, m2 * a2 * a2 + I2,
         m2 * a2 * a2 + I2 + dt * tm.joint_damping}};
    const double om_phi = tool.base_angvel;
    double bias[4] = {-m1 * a1 * cphi * om_phi * om_phi - m2 * a2 * csig * om * om,
                      -m1 * a1 * sphi * om_phi * om_phi - m2 * a2 * ssig * om * om, 0.0, 0.0};
    double rhs[4] = {F[0] - bias[0], F[1] - bias[1], F[2] - bias[2], F[3] - bias[3]};
    double acc[4];
    detail::solve_linear<4>(M4, rhs, acc);
    tool.base_vel += Vec2{acc[0], acc[1]} * dt;
    tool.base_angvel += acc[2] * dt;
    tool.theta_art_dot += acc[3] * dt;
  }

  const double theta_before = tool.theta_art;
  tool.base_pos += tool.base_vel * dt;
  tool.base_ang += tool.base_angvel * dt;
  tool.theta_art += tool.theta_art_dot * dt;

  // Joint limits: clamp position and zero the joint rate through an internal
  // impulse solved against the mass matrix, so the momentum exchange with
  // link 1 stays consistent (a bare theta_dot = 0 would inject angular
  // momentum every step the spring presses into the stop).
  double dtheta_dot = 0.0;
  if (tool.theta_art < tm.theta_lo) {
    tool.theta_art = tm.theta_lo;
    if (tool.theta_art_dot < 0.0) dtheta_dot = -tool.theta_art_dot;
  } else if (tool.theta_art > tm.theta_hi) {
    tool.theta_art = tm.theta_hi;
    if (tool.theta_art_dot > 0.0) dtheta_dot = -tool.theta_art_dot;
  }
  if (dtheta_dot != 0.0) {
    const double phi2 = tool.base_ang;
    const double sig2 = tool.base_ang + tool.theta_art;
    const double c2 = std::cos(phi2), s2 = std::sin(phi2);
    const double cs2 = std::cos(sig2), ss2 = std::sin(sig2);
    double M4[4][4] = {
        {m1 + m2, 0.0, -(m1 * a1 * s2 + m2 * a2 * ss2), -m2 * a2 * ss2},
        {0.0, m1 + m2, m1 * a1 * c2 + m2 * a2 * cs2, m2 * a2 * cs2},
        {-(m1 * a1 * s2 + m2 * a2 * ss2), m1 * a1 * c2 + m2 * a2 * cs2,
         m1 * a1 * a1 + I1 + m2 * a2 * a2 + I2, m2 * a2 * a2 + I2},
        {-m2 * a2 * ss2, m2 * a2 * cs2, m2 * a2 * a2 + I2, m2 * a2 * a2 + I2}};
    double e4[4] = {0.0, 0.0, 0.0, 1.0};
    double col[4];
    detail::solve_linear<4>(M4, e4, col);
    const double impulse = dtheta_dot / col[3];
    tool.base_vel += Vec2{col[0], col[1]} * impulse;
    tool.base_angvel += col[2] * impulse;
    tool.theta_art_dot += col[3] * impulse;
  }

  // drag the backlash engagement with the actual relative motion
  if (w > 0.0) {
    tool.backlash_engagement =
        std::clamp(e + (tool.theta_art - theta_before), -w, w);
  } else {
    tool.backlash_engagement = 0.0;
  }

  // --- fingers (bearing drag integrated implicitly)
  for (int j = 0; j < D; ++j) {
    const double v_pred = hand.q_dot[j] + (tau_act[j] + tau_contact[j]) / hm.joint_inertia * dt;
    hand.q_dot[j] = v_pred / (1.0 + dt * hm.joint_damping / hm.joint_inertia);
    hand.q[j] += hand.q_dot[j] * dt;
    if (hand.q[j] < hm.q_lo[j]) {
      hand.q[j] = hm.q_lo[j];
      if (hand.q_dot[j] < 0.0) hand.q_dot[j] = 0.0;
    } else if (hand.q[j] > hm.q_hi[j]) {
      hand.q[j] = hm.q_hi[j];
      if (hand.q_dot[j] > 0.0) hand.q_dot[j] = 0.0;
    }
  }

  // --- mount (spring to nominal + external wrench)
  {
    const MountModel& mm = p.mount;
    const Vec2 f = ext_mount.force - mm.lin_stiffness * (mount.pos - mount.nominal_pos) -
                   mm.lin_damping * mount.vel;
    const double tq = ext_mount.torque - mm.ang_stiffness * (mount.ang - mount.nominal_ang) -
                      mm.ang_damping * mount.angvel;
    mount.vel += f * (dt / mm.mass);
    mount.angvel += tq * (dt / mm.inertia);
    mount.pos += mount.vel * dt;
    mount.ang += mount.angvel * dt;
  }

  // --- sanity: non-finite state or runaway velocities are a hard failure
  bool ok = detail::finite(tool.base_pos.x) && detail::finite(tool.base_pos.y) &&
            detail::finite(tool.base_ang) && detail::finite(tool.base_vel.x) &&
            detail::finite(tool.base_vel.y) && detail::finite(tool.base_angvel) &&
            detail::finite(tool.theta_art) && detail::finite(tool.theta_art_dot);
  for (int j = 0; ok && j < D; ++j)
    ok = detail::finite(hand.q[j]) && detail::finite(hand.q_dot[j]);
  if (!ok) throw integration_error(step_index, "non-finite state");
  if (tool.base_vel.norm() > 50.0 || std::fabs(tool.base_angvel) > 500.0 ||
      std::fabs(tool.theta_art_dot) > 500.0)
    throw integration_error(step_index, "velocity blow-up");

  return out;
}

// Total mechanical energy of the scene. PD springs are included against the
// given frozen targets (pass include_pd = false to exclude the actuators).
inline double mechanical_energy(const SimState& s, const SimParams& p,
                                const std::vector<double>& targets, bool include_pd = true) {
  const ToolModel& tm = p.tool;
  const HandModel& hm = p.hand;
  const ToolState& tool = s.tool;
  const double a1 = tm.com_offsets[0], a2 = tm.com_offsets[1];
  const double m1 = tm.link_masses[0], m2 = tm.link_masses[1];
  const double phi = tool.base_ang, sig = tool.base_ang + tool.theta_art;
  const double om1 = tool.base_angvel, om2 = tool.base_angvel + tool.theta_art_dot;

  const Vec2 v1 = tool.base_vel + om1 * (a1 * dir(phi)).perp();
  const Vec2 v2 = tool.base_vel + om2 * (a2 * dir(sig)).perp();
  double E = 0.5 * m1 * v1.norm2() + 0.5 * tm.link_inertias[0] * om1 * om1 +
             0.5 * m2 * v2.norm2() + 0.5 * tm.link_inertias[1] * om2 * om2;

  // gravity
  E += p.gravity * (m1 * (tool.base_pos + a1 * dir(phi)).y + m2 * (tool.base_pos + a2 * dir(sig)).y);

  // joint spring acts at the mechanism angle theta - engagement
  const double defl = tool.theta_art - tool.backlash_engagement - tm.joint_spring_rest;
  E += 0.5 * tm.joint_spring_k * defl * defl;

  for (int j = 0; j < hm.n_joints; ++j) {
    E += 0.5 * hm.joint_inertia * s.hand.q_dot[j] * s.hand.q_dot[j];
    const double dr = s.hand.q[j] - hm.spring_return_rest;
    E += 0.5 * hm.spring_return_k * dr * dr;
    if (include_pd) {
      const double dq = targets[j] - s.hand.q[j];
      E += 0.5 * hm.pd_kp * dq * dq;
    }
  }

  // contact springs (normal penalty + tangential stick springs)
  for (int j = 0; j < hm.n_joints; ++j) {
    const auto pk = detail::pad_kinematics(hm, s.mount, j, s.hand.q[j], s.hand.q_dot[j]);
    for (int link = 0; link < 2; ++link) {
      const Pose2 pose = tool.link_pose(link);
      const Vec2 seg_a = pose.apply({tm.seg_starts[link], 0.0});
      const Vec2 seg_b = pose.apply({tm.link_lengths[link], 0.0});
      const double t = closest_param_on_segment(pk.center, seg_a, seg_b);
      const Vec2 closest = seg_a + t * (seg_b - seg_a);
      const Vec2 d = pk.center - closest;
      const double pen = hm.pad_radii[j] + tm.link_radius - d.norm();
      if (pen <= 0.0) continue;
      E += 0.5 * hm.pad_stiffness * pen * pen;
      const std::size_t ai = static_cast<std::size_t>(j) * 2 + link;
      if (ai < s.anchors.size() && s.anchors[ai].active) {
        const Vec2 n = d * (1.0 / d.norm());
        const double slip = n.perp().dot(closest - pose.apply(s.anchors[ai].local));
        E += 0.5 * hm.pad_shear_stiffness * slip * slip;
      }
    }
  }

  // mount
  const MountModel& mm = p.mount;
  E += 0.5 * mm.mass * s.mount.vel.norm2() + 0.5 * mm.inertia * s.mount.angvel * s.mount.angvel;
  E += 0.5 * mm.lin_stiffness * (s.mount.pos - s.mount.nominal_pos).norm2();
  const double da = s.mount.ang - s.mount.nominal_ang;
  E += 0.5 * mm.ang_stiffness * da * da;
  return E;
}

}  // namespace ahand
