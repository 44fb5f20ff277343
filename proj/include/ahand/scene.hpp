#pragma once

#include <cmath>
#include <vector>

#include "ahand/dynamics.hpp"
#include "ahand/rng.hpp"

namespace ahand {

// Default desk-scale scene. The tool points right from the joint with the
// jaw opening around +x: link 1 is the lower arm and carries the tool's
// weight on pads 0-2 (support forces enter only the rigid-body rows, never
// the articulation), link 2 is the upper arm articulated by pads 3-5
// pressing from above. A preloaded joint spring opens the jaw against
// gravity, so releasing the upper pads opens and pressing them closes.
// All levers extend left from bases on the wrist side; q >= 0 moves every
// pad toward the tool.
inline SimParams default_sim_params() {
  SimParams p;
  p.tool = ToolModel{};

  const double kPi = 3.14159265358979323846;
  HandModel h;
  h.n_joints = 6;
  h.pad_radii.assign(6, 0.015);
  // Pads 0-2: support row under link 1, contacts near x = {0.025, 0.065,
  // 0.105} straddling the tool COM (~0.049). Pads 3-4: close the jaw by
  // pressing the link-2 blade from above (x ~ 0.055, 0.095). Pad 5: the
  // "thumb", presses the link-2 tail behind the pivot to open the jaw.
  h.pads = {
      PadLever{{0.0922, 0.2485}, 0.070, kPi, -1.0},
      PadLever{{0.1387, 0.2296}, 0.080, kPi, -1.0},
      PadLever{{0.1952, 0.2087}, 0.100, kPi, -1.0},
      PadLever{{0.1200, 0.3642}, 0.070, kPi, +1.0},
      PadLever{{0.1657, 0.3831}, 0.080, kPi, +1.0},
      PadLever{{0.0414, 0.3605}, 0.070, kPi, +1.0},
  };
  h.q_lo.assign(6, -0.4);
  h.q_hi.assign(6, 1.2);
  p.hand = h;

  p.mount = MountModel{};
  return p;
}

inline SimState make_scene_state(const SimParams& p, double theta0, const Vec2& joint_pos,
                                 const std::vector<double>& q0) {
  SimState s;
  s.tool.base_pos = joint_pos;
  s.tool.base_ang = -0.5 * theta0;  // symmetric split around +x, link 2 above
  s.tool.theta_art = theta0;
  // engaged on the side the opening spring presses
  s.tool.backlash_engagement = p.tool.backlash_halfwidth;
  s.hand.q = q0;
  s.hand.q_dot.assign(q0.size(), 0.0);
  s.mount = MountState{};
  return s;
}

namespace detail {

inline double pad_penetration(const SimParams& p, const MountState& mount, int j, double q,
                              const ToolState& tool, int link) {
  const auto pk = pad_kinematics(p.hand, mount, j, q, 0.0);
  const Pose2 pose = tool.link_pose(link);
  const Vec2 seg_a = pose.apply({p.tool.seg_starts[link], 0.0});
  const Vec2 seg_b = pose.apply({p.tool.link_lengths[link], 0.0});
  const double t = closest_param_on_segment(pk.center, seg_a, seg_b);
  const double dist = (pk.center - (seg_a + t * (seg_b - seg_a))).norm();
  return p.hand.pad_radii[j] + p.tool.link_radius - dist;
}

// Find q so the pad penetrates its assigned link by `target` (meters),
// approaching from the extended side. Returns false if the pad cannot reach.
inline bool solve_pad_q(const SimParams& p, const MountState& mount, const ToolState& tool, int j,
                        int link, double target, double* q_out) {
  const HandModel& h = p.hand;
  const int kScan = 160;
  double q_prev = h.q_lo[j];
  double f_prev = pad_penetration(p, mount, j, q_prev, tool, link) - target;
  for (int i = 1; i <= kScan; ++i) {
    const double q = h.q_lo[j] + (h.q_hi[j] - h.q_lo[j]) * i / kScan;
    const double f = pad_penetration(p, mount, j, q, tool, link) - target;
    if (f_prev < 0.0 && f >= 0.0) {
      double lo = q_prev, hi = q;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = pad_penetration(p, mount, j, mid, tool, link) - target;
        (fm < 0.0 ? lo : hi) = mid;
      }
      *q_out = 0.5 * (lo + hi);
      return true;
    }
    q_prev = q;
    f_prev = f;
  }
  return false;
}

}  // namespace detail

// Procedural grasp: place the tool with theta sampled in [band_lo, band_hi]
// and solve pad joint angles so the initial contact forces sit near static
// equilibrium: the articulation pads balance the opening spring, the support
// pads carry the weight plus the press reaction. Penetrations stay within
// [0.2, 1.0] mm. Candidates must survive a 30-step settle simulation.
inline SimState sample_initial_grasp(Rng& rng, const SimParams& p, double band_lo,
                                     double band_hi, int max_attempts = 100) {
  const int D = p.hand.n_joints;
  const ToolModel& tm = p.tool;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const double theta0 = rng.uniform(band_lo, band_hi);
    const Vec2 joint_pos{rng.uniform(-0.004, 0.004), 0.30 + rng.uniform(-0.004, 0.004)};

    SimState cand = make_scene_state(p, theta0, joint_pos, std::vector<double>(D, 0.0));

    // net opening torque the articulation pads must hold (spring engaged at
    // +halfwidth, minus gravity on link 2)
    const double defl = theta0 - tm.backlash_halfwidth - tm.joint_spring_rest;
    const double tau_open = -tm.joint_spring_k * defl -
                            9.81 * tm.link_masses[1] * tm.com_offsets[1] * std::cos(theta0 / 2.0);
    const int n_sup = D / 2;
    const double tail_touch = 0.25;     // N, thumb resting on the tail
    const double tail_lever = 0.02;
    const double blade_lever = 0.075;   // mean blade-contact distance from the joint
    const double f_art =
        std::max(0.0, tau_open + tail_touch * tail_lever) / (2.0 * blade_lever);

    // Support forces balance weight, press reaction, and pitch torque about
    // the tool COM (the support row straddles it).
    const double tilt = std::cos(theta0 / 2.0);
    const double x_com =
        (tm.link_masses[0] * tm.com_offsets[0] + tm.link_masses[1] * tm.com_offsets[1]) * tilt /
        (tm.link_masses[0] + tm.link_masses[1]);
    const double w_eff =
        9.81 * (tm.link_masses[0] + tm.link_masses[1]) + 2.0 * f_art + tail_touch;
    const double sup_x[3] = {0.025, 0.065, 0.105};
    double lbar = 0.0, lvar = 0.0;
    for (double x : sup_x) lbar += (x - x_com) / n_sup;
    for (double x : sup_x) {
      const double d = x - x_com - lbar;
      lvar += d * d;
    }
    std::vector<double> f_sup(n_sup, w_eff / n_sup);
    if (lvar > 1e-9) {
      const double alpha = -w_eff * lbar / lvar;
      for (int i = 0; i < n_sup; ++i) {
        f_sup[i] += alpha * (sup_x[i] - x_com - lbar);
        f_sup[i] = std::max(f_sup[i], 0.2 * w_eff / n_sup);
      }
    }

    // pad and finger act as springs in series when the PD target is frozen
    const double arm2 = 0.0064;
    const double k_series = 1.0 / (1.0 / p.hand.pad_stiffness + arm2 / p.hand.pd_kp);
    auto pen_for = [&](double force) { return std::clamp(force / k_series, 0.2e-3, 1.0e-3); };

    bool ok = true;
    for (int j = 0; j < D && ok; ++j) {
      const int link = j < n_sup ? 0 : 1;
      const double jitter = rng.uniform(0.9, 1.1);
      const double force =
          j < n_sup ? f_sup[j] : (j == D - 1 ? tail_touch : f_art);
      double q = 0.0;
      ok = detail::solve_pad_q(p, cand.mount, cand.tool, j, link, pen_for(force * jitter), &q);
      if (ok) cand.hand.q[j] = q;
    }
    if (!ok) continue;

    // Damped pre-settle: bleed velocities every substep so the assembly
    // relaxes into static equilibrium instead of ringing, then freeze.
    const std::vector<double> hold = cand.hand.q;
    const double h0 = object_height(cand.tool);
    const double th0 = cand.tool.theta_art;
    bool survived = true;
    try {
      for (int k = 0; k < 90; ++k) {
        step_physics(cand, hold, Wrench{}, Wrench{}, p, k);
        cand.tool.base_vel = cand.tool.base_vel * 0.85;
        cand.tool.base_angvel *= 0.85;
        cand.tool.theta_art_dot *= 0.85;
        for (auto& v : cand.hand.q_dot) v *= 0.85;
      }
    } catch (const integration_error&) {
      survived = false;
    }
    if (!survived) continue;
    cand.tool.base_vel = Vec2{};
    cand.tool.base_angvel = 0.0;
    cand.tool.theta_art_dot = 0.0;
    std::fill(cand.hand.q_dot.begin(), cand.hand.q_dot.end(), 0.0);
    if (std::fabs(object_height(cand.tool) - h0) > 5.0e-3) continue;
    if (std::fabs(cand.tool.theta_art - th0) > 0.08) continue;

    // settle filter: the relaxed state must hold on its own
    SimState probe = cand;
    std::size_t contacts_end = 0;
    try {
      for (int k = 0; k < 30; ++k)
        contacts_end = step_physics(probe, hold, Wrench{}, Wrench{}, p, k).contacts.size();
    } catch (const integration_error&) {
      survived = false;
    }
    if (survived && std::fabs(object_height(probe.tool) - object_height(cand.tool)) < 2.0e-3 &&
        contacts_end >= 3)
      return cand;
  }
  throw grasp_init_error("no feasible grasp after " + std::to_string(max_attempts) + " attempts");
}

}  // namespace ahand
