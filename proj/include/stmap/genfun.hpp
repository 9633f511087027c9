#ifndef STMAP_GENFUN_HPP
#define STMAP_GENFUN_HPP

#include "stmap/core.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace stmap {

/// Thrown when a sampled point violates the uniform twist condition
/// <d12(q,Q) v, v> <= -a |v|^2.
class ConvexityViolation : public Error {
public:
    ConvexityViolation(std::string msg, Vec q_, Vec Q_, Vec v_, double value_)
        : Error(std::move(msg)), q(std::move(q_)), Q(std::move(Q_)), v(std::move(v_)), value(value_) {}
    Vec q, Q, v;
    double value;
};

/// Thrown when a certified inequality fails at a sampled witness.
class BoundViolation : public Error {
public:
    BoundViolation(std::string msg, Vec q_, Vec Q_, double margin_)
        : Error(std::move(msg)), q(std::move(q_)), Q(std::move(Q_)), margin(margin_) {}
    BoundViolation(std::string msg) : Error(std::move(msg)), margin(0) {}
    Vec q, Q;
    double margin;
};

/// Generating function S(q,Q) of a symplectic twist map of T*T^n, defined on
/// the universal cover and periodic under the diagonal lattice action:
/// S(q+m, Q+m) = S(q,Q). The map is recovered from
///   p = -d1 S(q,Q),   P = d2 S(q,Q).
class GeneratingFunction {
public:
    virtual ~GeneratingFunction() = default;

    virtual int dim() const = 0;
    virtual double eval(const Vec& q, const Vec& Q) const = 0;
    virtual Vec d1(const Vec& q, const Vec& Q) const = 0;
    virtual Vec d2(const Vec& q, const Vec& Q) const = 0;
    /// Second derivatives; (d12)_{ij} = d^2 S / dq_i dQ_j.
    virtual Mat d11(const Vec& q, const Vec& Q) const = 0;
    virtual Mat d12(const Vec& q, const Vec& Q) const = 0;
    virtual Mat d22(const Vec& q, const Vec& Q) const = 0;

    virtual std::string label() const = 0;

    /// Whether the family satisfies the normalization S(0,0) = 0.
    virtual bool normalized_at_origin() const { return false; }
};

using GenFunPtr = std::shared_ptr<const GeneratingFunction>;

/// Finite sum of cosine harmonics  sum_i c_i cos(2 pi <k_i, q>)  with integer
/// wave vectors k_i; 1-periodic in every coordinate by construction.
class TrigPotential {
public:
    struct Term {
        double coef;
        IVec wave;
    };

    TrigPotential() : n_(0) {}
    TrigPotential(int n, std::vector<Term> terms);

    int dim() const { return n_; }
    bool empty() const { return terms_.empty(); }

    double value(const Vec& q) const;
    Vec grad(const Vec& q) const;
    Mat hess(const Vec& q) const;

private:
    int n_;
    std::vector<Term> terms_;
};

/// S0(q,Q) = 1/2 <A^{-1}(Q-q), Q-q> for symmetric invertible A; generates
/// the completely integrable map (q,p) -> (q+Ap, p).
GenFunPtr integrable_genfun(const Mat& A);

/// S(q,Q) = S0(q,Q) + V(q); generates (q,p) -> (q + A(p+grad V(q)), p + grad V(q)).
GenFunPtr standard_genfun(const Mat& A, TrigPotential V, std::string label = "");

/// Classical standard family on T*T^1: A = 1, V(q) = s/(4 pi^2) cos(2 pi q).
GenFunPtr classical_standard_genfun(double s);

/// Froeschle family on T*T^2: A = Id,
/// V(q) = (2 pi)^{-2} (K1 cos 2 pi q1 + K2 cos 2 pi q2 + lambda cos 2 pi (q1+q2)).
GenFunPtr froeschle_genfun(double K1, double K2, double lambda);

/// Sampling plan for convexity and lower-bound certification. The grid covers
/// q in [0,1)^n and the displacement u = Q-q in [-displacement, displacement]^n.
struct ConvexitySampling {
    int per_axis = 32;
    int random_samples = 10000;
    double displacement = 3.0;
    std::uint64_t seed = 7;
};

/// Certified twist constants over a sampled box: uniform convexity constant a
/// (so <d12 v, v> <= -a|v|^2 on every sample) and kprime = max |d12^{-1}|.
struct TwistConstants {
    double a = 0.0;
    double kprime = 0.0;
    long sample_count = 0;
    double displacement = 0.0;
    int per_axis = 0;
};

/// Sample d12 over the box and certify the uniform twist condition.
/// Throws ConvexityViolation with the witness sample on failure.
TwistConstants certify_convexity(const GeneratingFunction& S, const ConvexitySampling& sampling = {});

/// Coercivity certificate: S(q,Q) >= alpha - beta |Q-q| + gamma |Q-q|^2 with
/// alpha = min_q S(q,q), beta = max_q |d2 S(q,q)|, gamma = a/2.
struct LowerBoundCert {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    double worst_margin = 0.0;  // min over samples of S - bound
    long sample_count = 0;
    double displacement = 0.0;  // box actually verified (possibly widened)
};

/// Compute and verify the coercivity certificate on random samples; the
/// displacement box is widened until the quadratic term dominates the linear
/// one on the boundary. Throws BoundViolation with a witness on failure.
LowerBoundCert lower_bound_cert(const GeneratingFunction& S, const TwistConstants& tc,
                                const ConvexitySampling& sampling = {});

/// Central finite-difference audit of the analytic derivatives.
struct DerivativeCheckReport {
    double max_rel_d1 = 0.0;
    double max_rel_d2 = 0.0;
    double max_rel_d11 = 0.0;
    double max_rel_d12 = 0.0;
    double max_rel_d22 = 0.0;
    double max_rel() const;
};

DerivativeCheckReport fd_derivative_check(const GeneratingFunction& S, int samples = 100,
                                          double h = 1e-5, std::uint64_t seed = 11);

/// Max of |S(q+m,Q+m) - S(q,Q)| over random samples and integer translations.
double periodicity_residual(const GeneratingFunction& S, int samples = 200, std::uint64_t seed = 13);

}  // namespace stmap

#endif
