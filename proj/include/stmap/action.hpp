#ifndef STMAP_ACTION_HPP
#define STMAP_ACTION_HPP

#include "stmap/twist_map.hpp"

#include <vector>

namespace stmap {

class NotCritical : public Error {
public:
    using Error::Error;
};

/// Candidate (m,d) orbit segment in cover coordinates: the base points
/// q_1..q_{dN} of a broken orbit of a chain of N maps traversed d times,
/// closed by the wrap q_{dN+1} = q_1 + m.
struct Configuration {
    std::vector<Vec> points;
    OrbitClass cls;

    Configuration() = default;
    Configuration(std::vector<Vec> points_, OrbitClass cls_);

    int dim() const { return static_cast<int>(points.front().size()); }
    int count() const { return static_cast<int>(points.size()); }
    int chain_length() const { return count() / cls.d; }

    Vec flat() const;
    static Configuration from_flat(const Vec& x, const OrbitClass& cls, int n);
};

/// Coordinates on the quotient of configuration space by the deck action tau
/// and the cyclic shift sigma: mean coordinate v in [0,1)^n, gap variables
/// t_k = q_k - q_{k-1} - m/d, and the sigma rotation chosen for canonicity.
struct CanonicalForm {
    Vec v;
    std::vector<Vec> gaps;
    int shift_index = 0;
};

/// Discrete action W(q) = sum_k S_k(q_k, q_{k+1}) for a chain of N generating
/// functions cycled d times. Critical points correspond to (m,d) orbits:
/// grad W vanishes exactly when d1 S_k(q_k,q_{k+1}) + d2 S_{k-1}(q_{k-1},q_k) = 0
/// for every k, i.e. the momenta match across corners.
class ActionEvaluator {
public:
    ActionEvaluator(std::vector<GenFunPtr> chain, OrbitClass cls);

    int dim() const { return n_; }
    int chain_length() const { return static_cast<int>(chain_.size()); }
    int points() const { return chain_length() * cls_.d; }
    const OrbitClass& orbit_class() const { return cls_; }
    const std::vector<GenFunPtr>& chain() const { return chain_; }

    /// Generating function of segment k (0-based, k in [0, dN)).
    const GeneratingFunction& segment(int k) const { return *chain_[k % chain_.size()]; }

    double value(const Configuration& c) const;
    Vec gradient(const Configuration& c) const;
    /// Dense symmetric Hessian; block-cyclic-tridiagonal with n x n blocks.
    Mat hessian(const Configuration& c) const;

    /// Sup norm of the momentum mismatch across configuration corners.
    double critical_residual(const Configuration& c) const;

    /// Phase points of the orbit through a critical configuration,
    /// p_k = -d1 S_k(q_k, q_{k+1}). Throws NotCritical above tol.
    std::vector<PhasePoint> to_orbit(const Configuration& c, double tol = 1e-8) const;

    Configuration configuration(const Vec& flat) const {
        return Configuration::from_flat(flat, cls_, n_);
    }

private:
    void check(const Configuration& c) const;
    std::vector<GenFunPtr> chain_;
    OrbitClass cls_;
    int n_;
};

/// tau action: translate every point by the integer vector m.
Configuration apply_tau(const Configuration& c, const IVec& m);

/// sigma action: rotate the configuration by one chain period N, translating
/// the wrapped points by m. Fixes the orbit, permutes its representatives.
Configuration apply_sigma(const Configuration& c);

/// Quotient coordinates of a configuration. The sigma representative is fixed
/// by choosing, among the d admissible rotations of the gap sequence, the
/// lexicographically smallest (entries compared with tolerance tie_tol, ties
/// resolved toward the smaller rotation index).
CanonicalForm canonicalize(const Configuration& c, double tie_tol = 1e-9);

/// Rebuild a configuration from canonical coordinates (gap sums must be
/// consistent with the class, as produced by canonicalize).
Configuration reconstruct(const CanonicalForm& cf, const OrbitClass& cls);

/// Distance between orbits in quotient coordinates: min over admissible
/// rotations of the sup distance of gaps and mean (mean compared on T^n).
double quotient_distance(const Configuration& a, const Configuration& b);

/// Solve H x = rhs for the cyclic block-tridiagonal Hessian (block size n);
/// returns false when a pivot is ill-conditioned and a dense solve is needed.
bool cyclic_block_tridiag_solve(const Mat& H, const Vec& rhs, int n, Vec& x);

}  // namespace stmap

#endif
