#include "stmap/action.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stmap {

Configuration::Configuration(std::vector<Vec> points_, OrbitClass cls_)
    : points(std::move(points_)), cls(std::move(cls_)) {
    if (points.empty()) throw Error("Configuration: no points");
    for (const auto& q : points) {
        require_finite(q, "Configuration");
        if (q.size() != cls.m.size())
            throw DimensionMismatch("Configuration: point dim vs class dim");
    }
    if (count() % cls.d != 0)
        throw Error("Configuration: point count " + std::to_string(count()) +
                    " not divisible by d=" + std::to_string(cls.d));
}

Vec Configuration::flat() const {
    const int n = dim();
    Vec x(count() * n);
    for (int k = 0; k < count(); ++k) x.segment(k * n, n) = points[k];
    return x;
}

Configuration Configuration::from_flat(const Vec& x, const OrbitClass& cls, int n) {
    if (x.size() % n != 0) throw DimensionMismatch("Configuration::from_flat");
    const int count = static_cast<int>(x.size()) / n;
    std::vector<Vec> pts(count);
    for (int k = 0; k < count; ++k) pts[k] = x.segment(k * n, n);
    return Configuration(std::move(pts), cls);
}

ActionEvaluator::ActionEvaluator(std::vector<GenFunPtr> chain, OrbitClass cls)
    : chain_(std::move(chain)), cls_(std::move(cls)) {
    if (chain_.empty()) throw Error("ActionEvaluator: empty chain");
    for (const auto& S : chain_) {
        if (!S) throw Error("ActionEvaluator: null generating function");
        if (S->dim() != chain_.front()->dim())
            throw DimensionMismatch("ActionEvaluator: mixed chain dimensions");
    }
    n_ = chain_.front()->dim();
    if (cls_.m.size() != n_) throw DimensionMismatch("ActionEvaluator: class dim vs chain dim");
}

void ActionEvaluator::check(const Configuration& c) const {
    if (c.dim() != n_ || c.count() != points() || c.cls.d != cls_.d ||
        c.cls.m != cls_.m)
        throw DimensionMismatch("ActionEvaluator: configuration does not match class/chain");
}

double ActionEvaluator::value(const Configuration& c) const {
    check(c);
    const int dN = c.count();
    const Vec m = cls_.m.cast<double>();
    double w = 0.0;
    for (int k = 0; k < dN; ++k) {
        const Vec& qk = c.points[k];
        const Vec qk1 = (k + 1 < dN) ? c.points[k + 1] : Vec(c.points[0] + m);
        w += segment(k).eval(qk, qk1);
    }
    return w;
}

Vec ActionEvaluator::gradient(const Configuration& c) const {
    check(c);
    const int dN = c.count();
    const Vec m = cls_.m.cast<double>();
    Vec g = Vec::Zero(dN * n_);
    for (int k = 0; k < dN; ++k) {
        const Vec& qk = c.points[k];
        const Vec qk1 = (k + 1 < dN) ? c.points[k + 1] : Vec(c.points[0] + m);
        g.segment(k * n_, n_) += segment(k).d1(qk, qk1);
        g.segment(((k + 1) % dN) * n_, n_) += segment(k).d2(qk, qk1);
    }
    return g;
}

Mat ActionEvaluator::hessian(const Configuration& c) const {
    check(c);
    const int dN = c.count();
    const Vec m = cls_.m.cast<double>();
    Mat H = Mat::Zero(dN * n_, dN * n_);
    for (int k = 0; k < dN; ++k) {
        const int i = k, j = (k + 1) % dN;
        const Vec& qk = c.points[k];
        const Vec qk1 = (k + 1 < dN) ? c.points[k + 1] : Vec(c.points[0] + m);
        const auto& S = segment(k);
        const Mat B = S.d12(qk, qk1);
        H.block(i * n_, i * n_, n_, n_) += S.d11(qk, qk1);
        H.block(j * n_, j * n_, n_, n_) += S.d22(qk, qk1);
        H.block(i * n_, j * n_, n_, n_) += B;
        H.block(j * n_, i * n_, n_, n_) += B.transpose();
    }
    return H;
}

double ActionEvaluator::critical_residual(const Configuration& c) const {
    return gradient(c).lpNorm<Eigen::Infinity>();
}

std::vector<PhasePoint> ActionEvaluator::to_orbit(const Configuration& c, double tol) const {
    const double res = critical_residual(c);
    if (!(res < tol)) {
        std::ostringstream os;
        os << "to_orbit: configuration is not critical, residual " << res << " >= " << tol;
        throw NotCritical(os.str());
    }
    const int dN = c.count();
    const Vec m = cls_.m.cast<double>();
    std::vector<PhasePoint> orbit;
    orbit.reserve(dN);
    for (int k = 0; k < dN; ++k) {
        const Vec& qk = c.points[k];
        const Vec qk1 = (k + 1 < dN) ? c.points[k + 1] : Vec(c.points[0] + m);
        orbit.emplace_back(qk, -segment(k).d1(qk, qk1));
    }
    return orbit;
}

Configuration apply_tau(const Configuration& c, const IVec& m) {
    if (m.size() != c.cls.m.size()) throw DimensionMismatch("apply_tau");
    Configuration out = c;
    const Vec shift = m.cast<double>();
    for (auto& q : out.points) q += shift;
    return out;
}

Configuration apply_sigma(const Configuration& c) {
    const int dN = c.count();
    const int N = c.chain_length();
    const Vec m = c.cls.m.cast<double>();
    std::vector<Vec> pts(dN);
    for (int k = 0; k < dN; ++k)
        pts[k] = (k + N < dN) ? c.points[k + N] : Vec(c.points[k + N - dN] + m);
    return Configuration(std::move(pts), c.cls);
}

namespace {

std::vector<Vec> gap_sequence(const Configuration& c) {
    const int dN = c.count();
    const Vec m = c.cls.m.cast<double>();
    const Vec step = m / c.cls.d;
    std::vector<Vec> gaps(dN);
    for (int k = 0; k < dN; ++k) {
        const Vec prev = (k > 0) ? c.points[k - 1] : Vec(c.points[dN - 1] - m);
        gaps[k] = c.points[k] - prev - step;
    }
    return gaps;
}

/// Lexicographic order of rotations of the gap sequence, entries compared
/// coordinate-wise with tolerance. Returns -1, 0, or +1.
int compare_rotations(const std::vector<Vec>& gaps, int offa, int offb, double tol) {
    const int dN = static_cast<int>(gaps.size());
    for (int k = 0; k < dN; ++k) {
        const Vec& a = gaps[(k + offa) % dN];
        const Vec& b = gaps[(k + offb) % dN];
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            const double diff = a[i] - b[i];
            if (std::fabs(diff) > tol) return diff < 0 ? -1 : 1;
        }
    }
    return 0;
}

Vec mean_point(const Configuration& c) {
    Vec v = Vec::Zero(c.dim());
    for (const auto& q : c.points) v += q;
    return v / c.count();
}

}  // namespace

CanonicalForm canonicalize(const Configuration& c, double tie_tol) {
    const int dN = c.count();
    const int N = c.chain_length();
    const int d = c.cls.d;
    const auto gaps = gap_sequence(c);

    int best = 0;
    for (int j = 1; j < d; ++j)
        if (compare_rotations(gaps, j * N, best * N, tie_tol) < 0) best = j;

    CanonicalForm cf;
    cf.shift_index = best;
    cf.gaps.resize(dN);
    for (int k = 0; k < dN; ++k) cf.gaps[k] = gaps[(k + best * N) % dN];
    // Each sigma application adds m/d to the mean of the dN points.
    const Vec v = mean_point(c) + (static_cast<double>(best) / d) * c.cls.m.cast<double>();
    cf.v = reduce_to_torus(v);
    return cf;
}

Configuration reconstruct(const CanonicalForm& cf, const OrbitClass& cls) {
    const int dN = static_cast<int>(cf.gaps.size());
    if (dN == 0 || dN % cls.d != 0) throw Error("reconstruct: gap count vs class");
    const Vec step = cls.m.cast<double>() / cls.d;
    std::vector<Vec> pts(dN);
    pts[0] = Vec::Zero(cf.v.size());
    for (int k = 1; k < dN; ++k) pts[k] = pts[k - 1] + step + cf.gaps[k];
    Vec mean = Vec::Zero(cf.v.size());
    for (const auto& q : pts) mean += q;
    mean /= dN;
    const Vec shift = cf.v - mean;
    for (auto& q : pts) q += shift;
    return Configuration(std::move(pts), cls);
}

double quotient_distance(const Configuration& a, const Configuration& b) {
    if (a.cls.m != b.cls.m || a.cls.d != b.cls.d || a.count() != b.count())
        return std::numeric_limits<double>::infinity();
    const int dN = a.count();
    const int N = a.chain_length();
    const int d = a.cls.d;
    const auto ga = gap_sequence(a);
    const auto gb = gap_sequence(b);
    const Vec va = mean_point(a);
    const Vec vb = mean_point(b);
    const Vec step = a.cls.m.cast<double>() / d;

    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < d; ++j) {
        double dist = torus_distance(va + j * step, vb);
        for (int k = 0; k < dN && dist < best; ++k)
            dist = std::max(dist, (ga[(k + j * N) % dN] - gb[k]).lpNorm<Eigen::Infinity>());
        best = std::min(best, dist);
    }
    return best;
}

bool cyclic_block_tridiag_solve(const Mat& H, const Vec& rhs, int n, Vec& x) {
    if (H.rows() != H.cols() || H.rows() % n != 0 || H.rows() != rhs.size()) return false;
    const int dN = static_cast<int>(H.rows()) / n;
    if (dN < 4) return false;  // corners overlap the tridiagonal band

    // H = T + U M V^T with T the block tridiagonal part of H and M carrying
    // the two corner blocks; U = V = [e_0 (x) I, e_{dN-1} (x) I].
    std::vector<Mat> diag(dN), super(dN - 1);
    for (int k = 0; k < dN; ++k) diag[k] = H.block(k * n, k * n, n, n);
    for (int k = 0; k + 1 < dN; ++k) super[k] = H.block(k * n, (k + 1) * n, n, n);
    Mat M = Mat::Zero(2 * n, 2 * n);
    M.topRightCorner(n, n) = H.block(0, (dN - 1) * n, n, n);
    M.bottomLeftCorner(n, n) = H.block((dN - 1) * n, 0, n, n);

    // Block Thomas factorization of T: Ubar_0 = D_0,
    // L_k = E_{k-1}^T Ubar_{k-1}^{-1}, Ubar_k = D_k - L_k E_{k-1}.
    std::vector<Eigen::PartialPivLU<Mat>> ubar_lu(dN);
    std::vector<Mat> lower(dN);
    Mat ubar = diag[0];
    for (int k = 0;; ++k) {
        ubar_lu[k].compute(ubar);
        if (!(ubar_lu[k].rcond() > 1e-12)) return false;
        if (k + 1 == dN) break;
        const Mat t = ubar_lu[k].transpose().solve(super[k]);
        lower[k + 1] = t.transpose();
        ubar = diag[k + 1] - lower[k + 1] * super[k];
    }

    auto thomas_solve = [&](const Mat& B) -> Mat {
        Mat Y = B;
        for (int k = 1; k < dN; ++k)
            Y.middleRows(k * n, n) -= lower[k] * Y.middleRows((k - 1) * n, n);
        Mat X(B.rows(), B.cols());
        X.middleRows((dN - 1) * n, n) = ubar_lu[dN - 1].solve(Y.middleRows((dN - 1) * n, n));
        for (int k = dN - 2; k >= 0; --k)
            X.middleRows(k * n, n) =
                ubar_lu[k].solve(Y.middleRows(k * n, n) - super[k] * X.middleRows((k + 1) * n, n));
        return X;
    };

    Mat U = Mat::Zero(dN * n, 2 * n);
    U.topLeftCorner(n, n) = Mat::Identity(n, n);
    U.bottomRightCorner(n, n) = Mat::Identity(n, n);

    const Mat Yb = thomas_solve(rhs);
    const Mat Yu = thomas_solve(U);

    auto gather = [&](const Mat& Y) -> Mat {
        Mat W(2 * n, Y.cols());
        W.topRows(n) = Y.topRows(n);
        W.bottomRows(n) = Y.bottomRows(n);
        return W;
    };

    const Mat G = Mat::Identity(2 * n, 2 * n) + M * gather(Yu);
    Eigen::FullPivLU<Mat> glu(G);
    if (!glu.isInvertible()) return false;
    const Vec h = glu.solve(M * gather(Yb));
    x = Yb - Yu * h;

    const double resid = (H * x - rhs).lpNorm<Eigen::Infinity>();
    return x.allFinite() && resid <= 1e-8 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>());
}

}  // namespace stmap
