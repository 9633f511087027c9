#ifndef STMAP_SUSPENSION_HPP
#define STMAP_SUSPENSION_HPP

#include "stmap/twist_map.hpp"

#include <vector>

namespace stmap {

/// Interpolation profile of the suspension: decays from +infinity at t=0 to
/// 1 at t=1/2 (stiffness of the quadratic stage) and from 1 to 0 on [1/2,1]
/// (fading the quadratic into the target). C^1 across t = 1/2.
double suspension_profile(double t);
double suspension_profile_dt(double t);

struct SuspensionParams {
    double dt = 1e-4;    // finite-difference step in t for the velocity field
    int richardson = 1;  // extrapolation levels applied to the stencil
};

/// Hamiltonian isotopy from the identity to the twist map generated by a
/// uniformly convex S. With f the profile above, g_t is generated by
///   S_t = a f(t)/2 |Q-q|^2                        on (0, 1/2],
///   S_t = a f(t)/2 |Q-q|^2 + (1 - f(t)) S(q,Q)    on [1/2, 1],
/// which keeps the convexity constant >= a for every t. The generating
/// Hamiltonian is recovered as H_t(z) = -dS_t/dt(q(g_t^{-1} z), q(z)).
class Suspension {
public:
    Suspension(GenFunPtr target, double a, NewtonParams newton = {});

    int dim() const { return target_->dim(); }
    double convexity() const { return a_; }
    const GeneratingFunction& target() const { return *target_; }

    /// S_t as a generating function; t in (0, 1]. S_1 coincides with the
    /// target up to the roundoff of the profile at t = 1.
    GenFunPtr genfun(double t) const;

    double genfun_value(double t, const Vec& q, const Vec& Q) const;
    double genfun_dt(double t, const Vec& q, const Vec& Q) const;

    PhasePoint map(double t, const PhasePoint& z) const;          // g_t, g_0 = id
    PhasePoint inverse_map(double t, const PhasePoint& z) const;  // g_t^{-1}

    double hamiltonian(double t, const PhasePoint& z) const;

    /// Velocity field of the isotopy at z: X_t = (d/dt g_t) o g_t^{-1},
    /// by Richardson-extrapolated time differences of the maps (one-sided
    /// second-order stencils next to t = 0 and t = 1).
    Vec vector_field(double t, const PhasePoint& z, const SuspensionParams& params = {}) const;

    /// (H_p, -H_q) of hamiltonian() by central differences in z; stacked in
    /// the same (dq/dt, dp/dt) layout as vector_field.
    Vec hamiltonian_field(double t, const PhasePoint& z, double dz = 1e-6) const;

    /// Integrate the velocity field over [0,1] from z with fixed-step RK4.
    PhasePoint transport(const PhasePoint& z, int steps,
                         const SuspensionParams& params = {}) const;

private:
    GenFunPtr target_;
    double a_;
    NewtonParams newton_;
};

/// |transport(z) - g_1(z)| in the sup norm.
double suspension_roundtrip_error(const Suspension& sus, const PhasePoint& z, int steps,
                                  const SuspensionParams& params = {});

/// Sup mismatch between the velocity field and the Hamiltonian field over
/// the (t, z) sample products.
double suspension_field_mismatch(const Suspension& sus, const std::vector<double>& times,
                                 const std::vector<PhasePoint>& points,
                                 const SuspensionParams& params = {});

/// Min over sampled t in (0,1] of the certified convexity constant of S_t.
double suspension_convexity_margin(const Suspension& sus, int t_samples,
                                   const ConvexitySampling& sampling = {});

}  // namespace stmap

#endif
