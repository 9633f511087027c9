#include "stmap/genfun.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace stmap {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string matrix_brief(const Mat& A) {
    if (A.isIdentity(1e-14)) return "I";
    std::ostringstream os;
    os << "[" << A.rows() << "x" << A.cols() << "]";
    return os.str();
}

/// Smallest eigenvalue of a symmetric matrix.
double min_eig_sym(const Mat& M) {
    Eigen::SelfAdjointEigenSolver<Mat> es;
    if (M.rows() <= 3)
        es.computeDirect(M, Eigen::EigenvaluesOnly);
    else
        es.compute(M, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

/// Smallest singular value.
double min_sv(const Mat& M) {
    const Mat G = M.transpose() * M;
    const double lo = min_eig_sym(G);
    return lo > 0.0 ? std::sqrt(lo) : 0.0;
}

Vec min_eigvec_sym(const Mat& M) {
    Eigen::SelfAdjointEigenSolver<Mat> es(M);
    return es.eigenvectors().col(0);
}

}  // namespace

TrigPotential::TrigPotential(int n, std::vector<Term> terms) : n_(n), terms_(std::move(terms)) {
    if (n < 1) throw Error("TrigPotential: dimension must be >= 1");
    for (const auto& t : terms_)
        if (t.wave.size() != n)
            throw DimensionMismatch("TrigPotential: wave vector dim " +
                                    std::to_string(t.wave.size()) + " vs n=" + std::to_string(n));
}

double TrigPotential::value(const Vec& q) const {
    double v = 0.0;
    for (const auto& t : terms_) v += t.coef * std::cos(kTwoPi * t.wave.cast<double>().dot(q));
    return v;
}

Vec TrigPotential::grad(const Vec& q) const {
    Vec g = Vec::Zero(n_);
    for (const auto& t : terms_) {
        const Vec k = t.wave.cast<double>();
        g -= t.coef * kTwoPi * std::sin(kTwoPi * k.dot(q)) * k;
    }
    return g;
}

Mat TrigPotential::hess(const Vec& q) const {
    Mat h = Mat::Zero(n_, n_);
    for (const auto& t : terms_) {
        const Vec k = t.wave.cast<double>();
        h -= t.coef * kTwoPi * kTwoPi * std::cos(kTwoPi * k.dot(q)) * (k * k.transpose());
    }
    return h;
}

namespace {

/// S(q,Q) = 1/2 <A^{-1}(Q-q), Q-q> + V(q).
class StandardGenFun : public GeneratingFunction {
public:
    StandardGenFun(Mat A, TrigPotential V, std::string label)
        : A_(std::move(A)), V_(std::move(V)), label_(std::move(label)) {
        const int n = static_cast<int>(A_.rows());
        if (A_.cols() != n) throw DimensionMismatch("StandardGenFun: A must be square");
        if (!V_.empty() && V_.dim() != n)
            throw DimensionMismatch("StandardGenFun: potential dim vs A dim");
        if (!A_.isApprox(A_.transpose(), 1e-12)) throw Error("StandardGenFun: A must be symmetric");
        Eigen::FullPivLU<Mat> lu(A_);
        if (!lu.isInvertible()) throw Error("StandardGenFun: A must be invertible");
        Ainv_ = lu.inverse();
        Ainv_ = 0.5 * (Ainv_ + Ainv_.transpose());
        Vec zero = Vec::Zero(n);
        normalized_ = std::fabs(V_.empty() ? 0.0 : V_.value(zero)) < 1e-15;
    }

    int dim() const override { return static_cast<int>(A_.rows()); }

    double eval(const Vec& q, const Vec& Q) const override {
        const Vec u = Q - q;
        double s = 0.5 * u.dot(Ainv_ * u);
        if (!V_.empty()) s += V_.value(q);
        return s;
    }

    Vec d1(const Vec& q, const Vec& Q) const override {
        Vec g = -(Ainv_ * (Q - q));
        if (!V_.empty()) g += V_.grad(q);
        return g;
    }

    Vec d2(const Vec& q, const Vec& Q) const override { return Ainv_ * (Q - q); }

    Mat d11(const Vec& q, const Vec& Q) const override {
        Mat h = Ainv_;
        if (!V_.empty()) h += V_.hess(q);
        return h;
    }

    Mat d12(const Vec&, const Vec&) const override { return -Ainv_; }

    Mat d22(const Vec&, const Vec&) const override { return Ainv_; }

    std::string label() const override { return label_; }

    bool normalized_at_origin() const override { return normalized_; }

private:
    Mat A_;
    Mat Ainv_;
    TrigPotential V_;
    std::string label_;
    bool normalized_ = false;
};

}  // namespace

GenFunPtr integrable_genfun(const Mat& A) {
    return std::make_shared<StandardGenFun>(A, TrigPotential{},
                                            "integrable(A=" + matrix_brief(A) + ")");
}

GenFunPtr standard_genfun(const Mat& A, TrigPotential V, std::string label) {
    if (label.empty()) label = "standard(A=" + matrix_brief(A) + ")";
    return std::make_shared<StandardGenFun>(A, std::move(V), std::move(label));
}

GenFunPtr classical_standard_genfun(double s) {
    Mat A = Mat::Identity(1, 1);
    IVec k(1);
    k << 1;
    TrigPotential V(1, {{s / (kTwoPi * kTwoPi), k}});
    std::ostringstream os;
    os << "standard(s=" << s << ")";
    return standard_genfun(A, std::move(V), os.str());
}

GenFunPtr froeschle_genfun(double K1, double K2, double lambda) {
    Mat A = Mat::Identity(2, 2);
    const double c = 1.0 / (kTwoPi * kTwoPi);
    IVec k1(2), k2(2), k3(2);
    k1 << 1, 0;
    k2 << 0, 1;
    k3 << 1, 1;
    TrigPotential V(2, {{c * K1, k1}, {c * K2, k2}, {c * lambda, k3}});
    std::ostringstream os;
    os << "froeschle(K1=" << K1 << ",K2=" << K2 << ",lambda=" << lambda << ")";
    return standard_genfun(A, std::move(V), os.str());
}

namespace {

/// Visit the certification samples: the joint (q, u) grid, then random draws.
/// The joint grid has per_axis^(2n) points; shrink per_axis when that explodes.
template <typename F>
long visit_box_samples(int n, const ConvexitySampling& sampling, int* per_axis_used, F&& visit) {
    int per_axis = std::max(2, sampling.per_axis);
    const double cap = 2e6;
    while (per_axis > 2 && std::pow(static_cast<double>(per_axis), 2.0 * n) > cap) --per_axis;
    if (per_axis_used) *per_axis_used = per_axis;

    const double L = sampling.displacement;
    long count = 0;
    std::vector<int> idx(2 * n, 0);
    Vec q(n), u(n);
    for (;;) {
        for (int i = 0; i < n; ++i) q[i] = static_cast<double>(idx[i]) / per_axis;
        for (int i = 0; i < n; ++i)
            u[i] = -L + 2.0 * L * static_cast<double>(idx[n + i]) / (per_axis - 1);
        visit(q, u);
        ++count;
        int j = 0;
        while (j < 2 * n && ++idx[j] == per_axis) idx[j++] = 0;
        if (j == 2 * n) break;
    }

    UniformSampler rng(sampling.seed);
    for (int s = 0; s < sampling.random_samples; ++s) {
        for (int i = 0; i < n; ++i) q[i] = rng.next();
        for (int i = 0; i < n; ++i) u[i] = rng.next(-L, L);
        visit(q, u);
        ++count;
    }
    return count;
}

}  // namespace

TwistConstants certify_convexity(const GeneratingFunction& S, const ConvexitySampling& sampling) {
    const int n = S.dim();
    TwistConstants tc;
    tc.a = std::numeric_limits<double>::infinity();
    tc.kprime = 0.0;
    tc.displacement = sampling.displacement;

    auto probe = [&](const Vec& q, const Vec& u) {
        const Vec Q = q + u;
        const Mat M = S.d12(q, Q);
        const Mat Msym = 0.5 * (M + M.transpose());
        const double a_here = min_eig_sym(-Msym);
        if (a_here <= 0.0) {
            Vec v = min_eigvec_sym(-Msym);
            std::ostringstream os;
            os << S.label() << ": twist condition fails at sampled (q,Q), <d12 v,v> = "
               << -a_here << " for unit v";
            throw ConvexityViolation(os.str(), q, Q, v, -a_here);
        }
        tc.a = std::min(tc.a, a_here);
        const double smin = min_sv(M);
        if (smin <= 0.0) {
            Vec v = min_eigvec_sym(-Msym);
            throw ConvexityViolation(S.label() + ": d12 singular at sampled (q,Q)", q, Q, v, 0.0);
        }
        tc.kprime = std::max(tc.kprime, 1.0 / smin);
    };

    tc.sample_count = visit_box_samples(n, sampling, &tc.per_axis, probe);
    return tc;
}

LowerBoundCert lower_bound_cert(const GeneratingFunction& S, const TwistConstants& tc,
                                const ConvexitySampling& sampling) {
    const int n = S.dim();
    if (!(tc.a > 0.0)) throw Error("lower_bound_cert: needs a certified twist constant a > 0");

    LowerBoundCert cert;
    cert.gamma = 0.5 * tc.a;

    // alpha and beta only involve the diagonal q = Q, which is 1-periodic.
    cert.alpha = std::numeric_limits<double>::infinity();
    cert.beta = 0.0;
    {
        const int per_axis = std::max(sampling.per_axis, 8);
        std::vector<int> idx(n, 0);
        Vec q(n);
        for (;;) {
            for (int i = 0; i < n; ++i) q[i] = static_cast<double>(idx[i]) / per_axis;
            cert.alpha = std::min(cert.alpha, S.eval(q, q));
            cert.beta = std::max(cert.beta, S.d2(q, q).norm());
            int j = 0;
            while (j < n && ++idx[j] == per_axis) idx[j++] = 0;
            if (j == n) break;
        }
        UniformSampler rng(sampling.seed + 1);
        for (int s = 0; s < sampling.random_samples; ++s) {
            for (int i = 0; i < n; ++i) q[i] = rng.next();
            cert.alpha = std::min(cert.alpha, S.eval(q, q));
            cert.beta = std::max(cert.beta, S.d2(q, q).norm());
        }
    }

    // Widen the verification box until it contains the vertex of the bound
    // parabola with margin; beyond that radius the bound is decreasing in
    // |Q-q| relative to the certified quadratic growth of S.
    ConvexitySampling box = sampling;
    const double vertex = cert.beta / (2.0 * cert.gamma);
    while (box.displacement < vertex + 1.0) box.displacement *= 1.5;
    cert.displacement = box.displacement;

    // The bound is tight at the diagonal minimum, where roundoff can push a
    // sampled margin a few ulps negative. Concede that much of alpha so the
    // certificate is also a floating-point statement.
    const double radius = std::sqrt(static_cast<double>(n)) * box.displacement;
    cert.alpha -= 64.0 * std::numeric_limits<double>::epsilon() *
                  std::max({1.0, std::fabs(cert.alpha), cert.beta * radius,
                            cert.gamma * radius * radius});

    cert.worst_margin = std::numeric_limits<double>::infinity();
    const double slack = 1e-9;
    auto probe = [&](const Vec& q, const Vec& u) {
        const Vec Q = q + u;
        const double r = u.norm();
        const double bound = cert.alpha - cert.beta * r + cert.gamma * r * r;
        const double margin = S.eval(q, Q) - bound;
        cert.worst_margin = std::min(cert.worst_margin, margin);
        if (margin < -slack) {
            std::ostringstream os;
            os << S.label() << ": coercivity bound fails, S - bound = " << margin;
            throw BoundViolation(os.str(), q, Q, margin);
        }
    };
    // Verification is random-sample driven; keep the grid part coarse.
    ConvexitySampling verify = box;
    verify.per_axis = std::min(verify.per_axis, 8);
    verify.seed = sampling.seed + 2;
    cert.sample_count = visit_box_samples(n, verify, nullptr, probe);
    return cert;
}

double DerivativeCheckReport::max_rel() const {
    return std::max({max_rel_d1, max_rel_d2, max_rel_d11, max_rel_d12, max_rel_d22});
}

namespace {

double rel_err(const Vec& got, const Vec& want) {
    return (got - want).lpNorm<Eigen::Infinity>() /
           std::max(1.0, want.lpNorm<Eigen::Infinity>());
}

double rel_err(const Mat& got, const Mat& want) {
    return (got - want).lpNorm<Eigen::Infinity>() /
           std::max(1.0, want.lpNorm<Eigen::Infinity>());
}

}  // namespace

DerivativeCheckReport fd_derivative_check(const GeneratingFunction& S, int samples, double h,
                                          std::uint64_t seed) {
    const int n = S.dim();
    UniformSampler rng(seed);
    DerivativeCheckReport rep;
    for (int s = 0; s < samples; ++s) {
        const Vec q = rng.vector(n, 0.0, 1.0);
        const Vec Q = q + rng.vector(n, -2.0, 2.0);

        Vec fd1(n), fd2(n);
        Mat fd11(n, n), fd12(n, n), fd22(n, n);
        for (int i = 0; i < n; ++i) {
            Vec e = Vec::Zero(n);
            e[i] = h;
            fd1[i] = (S.eval(q + e, Q) - S.eval(q - e, Q)) / (2 * h);
            fd2[i] = (S.eval(q, Q + e) - S.eval(q, Q - e)) / (2 * h);
            fd11.col(i) = (S.d1(q + e, Q) - S.d1(q - e, Q)) / (2 * h);
            fd12.row(i) = ((S.d2(q + e, Q) - S.d2(q - e, Q)) / (2 * h)).transpose();
            fd22.col(i) = (S.d2(q, Q + e) - S.d2(q, Q - e)) / (2 * h);
        }
        rep.max_rel_d1 = std::max(rep.max_rel_d1, rel_err(fd1, S.d1(q, Q)));
        rep.max_rel_d2 = std::max(rep.max_rel_d2, rel_err(fd2, S.d2(q, Q)));
        rep.max_rel_d11 = std::max(rep.max_rel_d11, rel_err(fd11, S.d11(q, Q)));
        rep.max_rel_d12 = std::max(rep.max_rel_d12, rel_err(fd12, S.d12(q, Q)));
        rep.max_rel_d22 = std::max(rep.max_rel_d22, rel_err(fd22, S.d22(q, Q)));
    }
    return rep;
}

double periodicity_residual(const GeneratingFunction& S, int samples, std::uint64_t seed) {
    const int n = S.dim();
    UniformSampler rng(seed);
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        const Vec q = rng.vector(n, -1.0, 1.0);
        const Vec Q = q + rng.vector(n, -2.0, 2.0);
        Vec m(n);
        for (int i = 0; i < n; ++i) m[i] = std::floor(rng.next(-2.0, 3.0));
        worst = std::max(worst, std::fabs(S.eval(q + m, Q + m) - S.eval(q, Q)));
    }
    return worst;
}

}  // namespace stmap
