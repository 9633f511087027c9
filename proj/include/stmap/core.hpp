#ifndef STMAP_CORE_HPP
#define STMAP_CORE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

namespace stmap {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using IVec = Eigen::VectorXi;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class NonFiniteValue : public Error {
public:
    using Error::Error;
};

inline bool all_finite(const Vec& x) { return x.allFinite(); }

inline void require_finite(const Vec& x, const char* what) {
    if (!x.allFinite()) throw NonFiniteValue(std::string(what) + ": non-finite entry");
}

inline void require_same_dim(const Vec& a, const Vec& b, const char* what) {
    if (a.size() != b.size())
        throw DimensionMismatch(std::string(what) + ": size " + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()));
}

/// Point of the universal cover R^n of the torus T^n.
using CoverPoint = Vec;

/// Point of T*T^n in cover coordinates: base point q, momentum p.
struct PhasePoint {
    Vec q;
    Vec p;

    PhasePoint() = default;
    PhasePoint(Vec q_, Vec p_) : q(std::move(q_)), p(std::move(p_)) {
        require_same_dim(q, p, "PhasePoint");
    }

    int dim() const { return static_cast<int>(q.size()); }

    Vec flat() const {
        Vec z(2 * q.size());
        z << q, p;
        return z;
    }

    static PhasePoint from_flat(const Vec& z) {
        if (z.size() % 2 != 0) throw DimensionMismatch("PhasePoint::from_flat: odd size");
        const auto n = z.size() / 2;
        return PhasePoint(z.head(n), z.tail(n));
    }
};

/// Integer lattice translation of the cover, acting as (q,p) -> (q+m, p).
struct DeckTranslation {
    IVec m;
    explicit DeckTranslation(IVec m_) : m(std::move(m_)) {}
};

inline PhasePoint deck_translate(const PhasePoint& z, const DeckTranslation& tau) {
    if (z.q.size() != tau.m.size())
        throw DimensionMismatch("deck_translate: point dim " + std::to_string(z.q.size()) +
                                " vs translation dim " + std::to_string(tau.m.size()));
    PhasePoint out = z;
    out.q += tau.m.cast<double>();
    return out;
}

/// Homotopy data (m,d) of a periodic orbit: F^d(q,p) = (q+m, p), d >= 1.
struct OrbitClass {
    IVec m;
    int d = 1;

    OrbitClass() = default;
    OrbitClass(IVec m_, int d_) : m(std::move(m_)), d(d_) {
        if (d < 1) throw Error("OrbitClass: d must be >= 1, got " + std::to_string(d));
    }

    int dim() const { return static_cast<int>(m.size()); }

    /// True when gcd(m_1, ..., m_n, d) = 1. Such classes cannot be traversed
    /// as a multiple cover of a shorter orbit.
    bool prime() const {
        int g = d;
        for (int k = 0; k < m.size(); ++k) g = std::gcd(g, std::abs(static_cast<long>(m[k])));
        return g == 1;
    }

    std::string str() const {
        std::ostringstream os;
        os << "((";
        for (int k = 0; k < m.size(); ++k) os << (k ? "," : "") << m[k];
        os << ")," << d << ")";
        return os.str();
    }
};

/// Reduce cover coordinates to the fundamental domain [0,1)^n.
inline CoverPoint reduce_to_torus(const CoverPoint& q) {
    require_finite(q, "reduce_to_torus");
    CoverPoint out(q.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        double r = q[i] - std::floor(q[i]);
        if (r >= 1.0) r = 0.0;  // guard against floor rounding at the seam
        out[i] = r;
    }
    return out;
}

/// Distance between two points of T^n (sup norm, each coordinate mod 1).
inline double torus_distance(const Vec& a, const Vec& b) {
    require_same_dim(a, b, "torus_distance");
    double dist = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        double r = std::fabs(a[i] - b[i]);
        r -= std::floor(r);
        dist = std::max(dist, std::min(r, 1.0 - r));
    }
    return dist;
}

/// Standard symplectic matrix [[0,-I],[I,0]] on R^{2n}.
inline Mat symplectic_J(int n) {
    if (n < 1) throw Error("symplectic_J: n must be >= 1");
    Mat J = Mat::Zero(2 * n, 2 * n);
    J.topRightCorner(n, n) = -Mat::Identity(n, n);
    J.bottomLeftCorner(n, n) = Mat::Identity(n, n);
    return J;
}

/// Deterministic uniform samples, independent of the standard library's
/// distribution implementations.
class UniformSampler {
public:
    explicit UniformSampler(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

    /// Uniform in [0,1).
    double next() {
        state_ ^= state_ << 13;
        state_ ^= state_ >> 7;
        state_ ^= state_ << 17;
        return static_cast<double>(state_ >> 11) * 0x1.0p-53;
    }

    double next(double lo, double hi) { return lo + (hi - lo) * next(); }

    Vec vector(int n, double lo, double hi) {
        Vec v(n);
        for (int i = 0; i < n; ++i) v[i] = next(lo, hi);
        return v;
    }

    /// Derive an independent stream for a named purpose.
    UniformSampler fork(std::uint64_t salt) const {
        return UniformSampler(state_ * 0x9e3779b97f4a7c15ULL + salt * 0xbf58476d1ce4e5b9ULL + 1);
    }

private:
    std::uint64_t state_;
};

}  // namespace stmap

#endif
