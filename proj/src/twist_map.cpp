#include "stmap/twist_map.hpp"

#include <sstream>

namespace stmap {

TwistMap::TwistMap(GenFunPtr S, NewtonParams params) : S_(std::move(S)), params_(params) {
    if (!S_) throw Error("TwistMap: null generating function");
}

namespace {

/// Damped Newton for residual(x) = 0 with analytic Jacobian. Throws
/// NewtonDivergence carrying `what` when the iteration cap is hit or the
/// line search stalls.
template <typename Residual, typename Jacobian>
Vec newton_solve(Vec x, Residual&& residual, Jacobian&& jacobian, const NewtonParams& params,
                 const char* what) {
    Vec r = residual(x);
    double rnorm = r.lpNorm<Eigen::Infinity>();
    for (int it = 0; it < params.max_iter; ++it) {
        if (rnorm < params.tol) return x;
        const Mat J = jacobian(x);
        const Vec step = J.partialPivLu().solve(-r);
        if (!step.allFinite())
            throw NewtonDivergence(std::string(what) + ": singular Jacobian in Newton solve");
        double lambda = 1.0;
        bool accepted = false;
        while (lambda > 1e-10) {
            Vec xt = x + lambda * step;
            Vec rt = residual(xt);
            const double rtnorm = rt.lpNorm<Eigen::Infinity>();
            if (rt.allFinite() && rtnorm < rnorm * (1.0 - 1e-4 * lambda)) {
                x = std::move(xt);
                r = std::move(rt);
                rnorm = rtnorm;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if (!accepted) {
            if (rnorm < 1e2 * params.tol) return x;  // stalled at roundoff floor
            std::ostringstream os;
            os << what << ": line search stalled, residual " << rnorm;
            throw NewtonDivergence(os.str());
        }
    }
    if (rnorm < 1e2 * params.tol) return x;
    std::ostringstream os;
    os << what << ": no convergence after " << params.max_iter << " iterations, residual "
       << rnorm;
    throw NewtonDivergence(os.str());
}

}  // namespace

PhasePoint TwistMap::forward(const PhasePoint& z) const {
    require_finite(z.q, "TwistMap::forward q");
    require_finite(z.p, "TwistMap::forward p");
    if (z.dim() != dim()) throw DimensionMismatch("TwistMap::forward: dimension mismatch");

    // First guess from the local twist: Q ~ q - (d12)^{-1} p.
    const Mat B0 = S_->d12(z.q, z.q);
    Vec Q0 = z.q - B0.partialPivLu().solve(z.p);
    if (!Q0.allFinite()) Q0 = z.q;

    auto residual = [&](const Vec& Q) -> Vec { return S_->d1(z.q, Q) + z.p; };
    auto jacobian = [&](const Vec& Q) -> Mat { return S_->d12(z.q, Q); };
    const Vec Q = newton_solve(Q0, residual, jacobian, params_, "TwistMap::forward");
    return PhasePoint(Q, S_->d2(z.q, Q));
}

PhasePoint TwistMap::inverse(const PhasePoint& z) const {
    require_finite(z.q, "TwistMap::inverse q");
    require_finite(z.p, "TwistMap::inverse p");
    if (z.dim() != dim()) throw DimensionMismatch("TwistMap::inverse: dimension mismatch");

    const Mat B0 = S_->d12(z.q, z.q);
    Vec q0 = z.q + B0.partialPivLu().solve(z.p);
    if (!q0.allFinite()) q0 = z.q;

    auto residual = [&](const Vec& q) -> Vec { return S_->d2(q, z.q) - z.p; };
    auto jacobian = [&](const Vec& q) -> Mat { return S_->d12(q, z.q).transpose(); };
    const Vec q = newton_solve(q0, residual, jacobian, params_, "TwistMap::inverse");
    return PhasePoint(q, -S_->d1(q, z.q));
}

Mat TwistMap::tangent(const PhasePoint& z) const {
    const PhasePoint w = forward(z);
    const int n = dim();
    const Mat B = S_->d12(z.q, w.q);
    const Mat S11 = S_->d11(z.q, w.q);
    const Mat S22 = S_->d22(z.q, w.q);
    const auto Blu = B.partialPivLu();

    Mat DF(2 * n, 2 * n);
    const Mat dQdq = -Blu.solve(S11);
    const Mat dQdp = -Blu.solve(Mat::Identity(n, n));
    DF.topLeftCorner(n, n) = dQdq;
    DF.topRightCorner(n, n) = dQdp;
    DF.bottomLeftCorner(n, n) = B.transpose() + S22 * dQdq;
    DF.bottomRightCorner(n, n) = S22 * dQdp;
    return DF;
}

double check_symplectic(const Mat& DF) {
    if (DF.rows() != DF.cols() || DF.rows() % 2 != 0)
        throw DimensionMismatch("check_symplectic: matrix must be even-dimensional square");
    const Mat J = symplectic_J(static_cast<int>(DF.rows()) / 2);
    return (DF.transpose() * J * DF - J).norm();
}

MapChain::MapChain(std::vector<TwistMapPtr> maps) : maps_(std::move(maps)) {
    if (maps_.empty()) throw Error("MapChain: empty composition");
    for (const auto& m : maps_) {
        if (!m) throw Error("MapChain: null map");
        if (m->dim() != maps_.front()->dim())
            throw DimensionMismatch("MapChain: mixed dimensions");
    }
}

PhasePoint MapChain::forward(const PhasePoint& z) const {
    PhasePoint w = z;
    for (const auto& m : maps_) w = m->forward(w);
    return w;
}

Mat MapChain::tangent(const PhasePoint& z) const {
    PhasePoint w = z;
    Mat DF = Mat::Identity(2 * dim(), 2 * dim());
    for (const auto& m : maps_) {
        DF = m->tangent(w) * DF;
        w = m->forward(w);
    }
    return DF;
}

MapChain compose(std::vector<TwistMapPtr> maps) { return MapChain(std::move(maps)); }

}  // namespace stmap
