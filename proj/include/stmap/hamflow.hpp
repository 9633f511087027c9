#ifndef STMAP_HAMFLOW_HPP
#define STMAP_HAMFLOW_HPP

#include "stmap/hamlang.hpp"
#include "stmap/twist_map.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <vector>

namespace stmap {

class ShootingDivergence : public Error {
public:
    using Error::Error;
};

class PositivityFailure : public Error {
public:
    using Error::Error;
};

/// The sampled Hessian bounds are incompatible with an optical Hamiltonian
/// (H_pp not uniformly positive definite, or unbounded second derivatives).
class OpticalityViolation : public Error {
public:
    using Error::Error;
};

/// Time-dependent Hamiltonian on T*T^n, 1-periodic in every q coordinate.
/// The flow convention throughout is q' = dH/dp, p' = -dH/dq.
class HamiltonianModel {
public:
    virtual ~HamiltonianModel() = default;

    virtual int dim() const = 0;
    virtual double value(const Vec& q, const Vec& p, double t) const = 0;
    /// Stacked [H_q; H_p], size 2n.
    virtual Vec gradient(const Vec& q, const Vec& p, double t) const = 0;
    /// Symmetric 2n x 2n Hessian in z = (q,p).
    virtual Mat hessian(const Vec& q, const Vec& p, double t) const = 0;
    virtual std::string label() const = 0;
};

using HamiltonianPtr = std::shared_ptr<const HamiltonianModel>;

/// H = 1/2 |p|^2.
HamiltonianPtr free_hamiltonian(int n);

/// H = 1/2 |p|^2 + V(q).
HamiltonianPtr mechanical_hamiltonian(int n, TrigPotential V, std::string label = "");

/// H = 1/2 p^2 + c cos(2 pi q) on T*T^1.
HamiltonianPtr pendulum_hamiltonian(double c);

/// Hamiltonian given by an expression in q1..qn, p1..pn, t. Periodicity in q
/// is the caller's claim; it is spot-checked on random samples.
HamiltonianPtr expression_hamiltonian(const hamlang::Ast& ast, int n = 0);

/// Integrate the flow from time t0 to t1 with fixed-step RK4.
PhasePoint flow(const HamiltonianModel& H, const PhasePoint& z, double t0, double t1, int steps);

/// State and tangent frame along a trajectory; U solves the variational
/// equation U' = M(t) U, M = [[H_pq, H_pp], [-H_qq, -H_qp]], U(t0) = Id.
struct TangentFlowResult {
    std::vector<double> times;
    std::vector<PhasePoint> states;
    std::vector<Mat> frames;

    const PhasePoint& final_state() const { return states.back(); }
    const Mat& final_frame() const { return frames.back(); }
};

TangentFlowResult tangent_flow(const HamiltonianModel& H, const PhasePoint& z, double t0,
                               double t1, int steps);

/// Sampled optical constants: eigenvalues of H_pp in [C, 1/C] and |hess H|
/// <= K over the sampled torus x momentum box x time window.
struct OpticalBounds {
    double C = 0.0;
    double K = 0.0;
    double p_max = 0.0;
    long sample_count = 0;
};

struct BoundsSampling {
    int q_per_axis = 16;
    int p_per_axis = 9;
    int t_samples = 9;
    int random_samples = 2000;
    double t_max = 1.0;
    std::uint64_t seed = 17;
};

/// Sample the Hessian over [0,1)^n x [-p_max,p_max]^n x [0,t_max].
/// Throws OpticalityViolation when H_pp fails uniform positivity.
OpticalBounds estimate_optical_bounds(const HamiltonianModel& H, double p_max,
                                      const BoundsSampling& sampling = {});

/// Momentum box radius used for (m,d) orbit work: 4 max|m_i/d| + 2.
double default_p_max(const std::vector<OrbitClass>& classes);

struct GronwallReport {
    double K = 0.0;
    double max_ratio = 0.0;  // |U(t)-Id| / (K |t-t0| e^{K|t-t0|}), max over samples
    double worst_time = 0.0;
    double sup_hessian = 0.0;
};

/// Check the a-priori tangent growth bound along one trajectory. Throws
/// BoundViolation when the bound fails (which signals K was underestimated).
GronwallReport gronwall_check(const HamiltonianModel& H, const PhasePoint& z, double t0,
                              double t1, double Kbound, int steps);

/// Upper-right n x n block of U(t0+eps): the twist block of the stint map,
/// with the optical window (eps C - K eps^2, eps/C + K eps^2).
struct TwistBlockReport {
    double epsilon = 0.0;
    Mat b;
    double eig_min = 0.0;  // extreme eigenvalues of sym(b)
    double eig_max = 0.0;
    double bound_lo = 0.0;
    double bound_hi = 0.0;
    bool admissible = false;  // bound_lo > 0
};

TwistBlockReport twist_block(const HamiltonianModel& H, const PhasePoint& z, double epsilon,
                             const OpticalBounds& bounds, int steps = 64, double t0 = 0.0);

/// Smallest admissible number of stints: ceil(safety K / C), bumped until the
/// per-stint twist window (C/N - K/N^2, ...) has positive lower edge.
int choose_N(const OpticalBounds& bounds, double safety);

struct ShootingParams {
    double tol = 1e-12;
    int max_iter = 50;
    int substeps = 64;      // RK4 steps per stint
    double fd_step = 1e-4;  // step for second derivatives of the stint action
};

/// Generating function of the stint [t0, t0+eps] of the flow. Values and
/// first derivatives come from a shooting boundary-value solve (d1 = -p0,
/// d2 = P1, eval = int p dq - H dt along the connecting trajectory); second
/// derivatives are central differences of d1 and d2. Boundary-value solutions
/// are cached, keyed by (q,Q) quantized to 1e-12.
class ShortTimeGenFun : public GeneratingFunction {
public:
    ShortTimeGenFun(HamiltonianPtr H, double t0, double eps, ShootingParams params = {});

    struct Stint {
        Vec p0;
        Vec P1;
        double action = 0.0;
    };

    Stint solve(const Vec& q, const Vec& Q) const;

    int dim() const override { return H_->dim(); }
    double eval(const Vec& q, const Vec& Q) const override { return solve(q, Q).action; }
    Vec d1(const Vec& q, const Vec& Q) const override { return -solve(q, Q).p0; }
    Vec d2(const Vec& q, const Vec& Q) const override { return solve(q, Q).P1; }
    Mat d11(const Vec& q, const Vec& Q) const override;
    Mat d12(const Vec& q, const Vec& Q) const override;
    Mat d22(const Vec& q, const Vec& Q) const override;
    std::string label() const override;

    double t_start() const { return t0_; }
    double epsilon() const { return eps_; }
    const HamiltonianModel& model() const { return *H_; }

private:
    HamiltonianPtr H_;
    double t0_, eps_;
    ShootingParams params_;
    mutable std::map<std::vector<long long>, Stint> cache_;
    mutable std::mutex cache_mutex_;
};

/// Stint map of the flow as a twist map: forward, inverse and tangent go
/// through direct integration; the generating relations are carried by the
/// attached ShortTimeGenFun.
class FlowTwistMap : public TwistMap {
public:
    FlowTwistMap(HamiltonianPtr H, double t0, double eps, ShootingParams params = {});

    PhasePoint forward(const PhasePoint& z) const override;
    PhasePoint inverse(const PhasePoint& z) const override;
    Mat tangent(const PhasePoint& z) const override;
    std::string label() const override;

    const ShortTimeGenFun& short_time_genfun() const;
    double t_start() const { return t0_; }
    double epsilon() const { return eps_; }

private:
    HamiltonianPtr H_;
    double t0_, eps_;
    int substeps_;
};

/// Factorization of the time-1 map into N uniformly convex twist maps.
struct DecompositionPlan {
    HamiltonianPtr H;
    OpticalBounds bounds;
    int N = 0;
    std::vector<std::shared_ptr<const FlowTwistMap>> steps;
    std::vector<TwistConstants> constants;

    MapChain chain() const;
    std::vector<GenFunPtr> genfuns() const;
};

/// Split [0,1] into N = choose_N(bounds, safety) stints and certify the
/// twist condition of every stint's generating function over a displacement
/// box matched to the momentum range. Throws ConvexityViolation if a stint
/// fails certification.
DecompositionPlan decompose(HamiltonianPtr H, const OpticalBounds& bounds, double safety = 4.0,
                            const ShootingParams& params = {}, int cert_per_axis = 6,
                            int cert_random = 200);

/// | h^d(z) - (z + (m,0)) | in the sup norm, by direct integration over d
/// time units.
double verify_md_point(const HamiltonianModel& H, const PhasePoint& z, const OrbitClass& cls,
                       int steps_per_unit = 256);

}  // namespace stmap

#endif
