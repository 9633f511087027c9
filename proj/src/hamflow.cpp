#include "stmap/hamflow.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stmap {

namespace {

class FreeHamiltonian : public HamiltonianModel {
public:
    explicit FreeHamiltonian(int n) : n_(n) {
        if (n < 1) throw Error("free_hamiltonian: n must be >= 1");
    }
    int dim() const override { return n_; }
    double value(const Vec&, const Vec& p, double) const override { return 0.5 * p.squaredNorm(); }
    Vec gradient(const Vec&, const Vec& p, double) const override {
        Vec g = Vec::Zero(2 * n_);
        g.tail(n_) = p;
        return g;
    }
    Mat hessian(const Vec&, const Vec&, double) const override {
        Mat h = Mat::Zero(2 * n_, 2 * n_);
        h.bottomRightCorner(n_, n_) = Mat::Identity(n_, n_);
        return h;
    }
    std::string label() const override { return "free(n=" + std::to_string(n_) + ")"; }

private:
    int n_;
};

class MechanicalHamiltonian : public HamiltonianModel {
public:
    MechanicalHamiltonian(int n, TrigPotential V, std::string label)
        : n_(n), V_(std::move(V)), label_(std::move(label)) {
        if (n < 1) throw Error("mechanical_hamiltonian: n must be >= 1");
        if (!V_.empty() && V_.dim() != n) throw DimensionMismatch("mechanical_hamiltonian: V dim");
    }
    int dim() const override { return n_; }
    double value(const Vec& q, const Vec& p, double) const override {
        return 0.5 * p.squaredNorm() + (V_.empty() ? 0.0 : V_.value(q));
    }
    Vec gradient(const Vec& q, const Vec& p, double) const override {
        Vec g(2 * n_);
        g.head(n_) = V_.empty() ? Vec(Vec::Zero(n_)) : V_.grad(q);
        g.tail(n_) = p;
        return g;
    }
    Mat hessian(const Vec& q, const Vec&, double) const override {
        Mat h = Mat::Zero(2 * n_, 2 * n_);
        if (!V_.empty()) h.topLeftCorner(n_, n_) = V_.hess(q);
        h.bottomRightCorner(n_, n_) = Mat::Identity(n_, n_);
        return h;
    }
    std::string label() const override { return label_; }

private:
    int n_;
    TrigPotential V_;
    std::string label_;
};

class ExpressionHamiltonian : public HamiltonianModel {
public:
    ExpressionHamiltonian(hamlang::Ast ast, int n) : ast_(std::move(ast)), n_(std::max(n, ast_.n)) {
        // Spot-check the claimed q-periodicity.
        UniformSampler rng(23);
        for (int s = 0; s < 64; ++s) {
            const Vec q = rng.vector(n_, -1.0, 1.0);
            const Vec p = rng.vector(n_, -2.0, 2.0);
            const double t = rng.next();
            const double base = hamlang::evaluate(ast_, q, p, t);
            for (int i = 0; i < n_; ++i) {
                Vec qs = q;
                qs[i] += 1.0;
                if (std::fabs(hamlang::evaluate(ast_, qs, p, t) - base) > 1e-9)
                    throw Error("expression Hamiltonian is not 1-periodic in q" +
                                std::to_string(i + 1) + ": '" + ast_.source + "'");
            }
        }
    }
    int dim() const override { return n_; }
    double value(const Vec& q, const Vec& p, double t) const override {
        return hamlang::evaluate(ast_, q, p, t);
    }
    Vec gradient(const Vec& q, const Vec& p, double t) const override {
        return hamlang::evaluate_with_gradient(ast_, q, p, t).g.head(2 * n_);
    }
    Mat hessian(const Vec& q, const Vec& p, double t) const override {
        return hamlang::evaluate_with_derivatives(ast_, q, p, t).h.topLeftCorner(2 * n_, 2 * n_);
    }
    std::string label() const override { return "expr(" + ast_.source + ")"; }

private:
    hamlang::Ast ast_;
    int n_;
};

}  // namespace

HamiltonianPtr free_hamiltonian(int n) { return std::make_shared<FreeHamiltonian>(n); }

HamiltonianPtr mechanical_hamiltonian(int n, TrigPotential V, std::string label) {
    if (label.empty()) label = "mechanical(n=" + std::to_string(n) + ")";
    return std::make_shared<MechanicalHamiltonian>(n, std::move(V), std::move(label));
}

HamiltonianPtr pendulum_hamiltonian(double c) {
    IVec k(1);
    k << 1;
    std::ostringstream os;
    os << "pendulum(c=" << c << ")";
    return mechanical_hamiltonian(1, TrigPotential(1, {{c, k}}), os.str());
}

HamiltonianPtr expression_hamiltonian(const hamlang::Ast& ast, int n) {
    return std::make_shared<ExpressionHamiltonian>(ast, n);
}

namespace {

template <typename RHS, typename Observer>
void rk4_integrate(Vec& y, double t0, double t1, int steps, RHS&& rhs, Observer&& observe) {
    if (steps < 1) throw Error("rk4: steps must be >= 1");
    const double h = (t1 - t0) / steps;
    observe(0, t0, y);
    for (int k = 0; k < steps; ++k) {
        const double t = t0 + k * h;
        const Vec k1 = rhs(t, y);
        const Vec k2 = rhs(t + 0.5 * h, Vec(y + 0.5 * h * k1));
        const Vec k3 = rhs(t + 0.5 * h, Vec(y + 0.5 * h * k2));
        const Vec k4 = rhs(t + h, Vec(y + h * k3));
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!y.allFinite()) throw NonFiniteValue("rk4: state blew up during integration");
        observe(k + 1, t + h, y);
    }
}

struct NoObserver {
    void operator()(int, double, const Vec&) const {}
};

Mat variational_matrix(const Mat& hess, int n) {
    Mat M(2 * n, 2 * n);
    M.topLeftCorner(n, n) = hess.bottomLeftCorner(n, n);
    M.topRightCorner(n, n) = hess.bottomRightCorner(n, n);
    M.bottomLeftCorner(n, n) = -hess.topLeftCorner(n, n);
    M.bottomRightCorner(n, n) = -hess.topRightCorner(n, n);
    return M;
}

double op_norm(const Mat& A) {
    Eigen::SelfAdjointEigenSolver<Mat> es(A.transpose() * A, Eigen::EigenvaluesOnly);
    const double top = es.eigenvalues().maxCoeff();
    return top > 0.0 ? std::sqrt(top) : 0.0;
}

}  // namespace

PhasePoint flow(const HamiltonianModel& H, const PhasePoint& z, double t0, double t1, int steps) {
    if (z.dim() != H.dim()) throw DimensionMismatch("flow: point dim vs model dim");
    const int n = H.dim();
    auto rhs = [&](double t, const Vec& y) -> Vec {
        const Vec g = H.gradient(y.head(n), y.tail(n), t);
        Vec dy(2 * n);
        dy.head(n) = g.tail(n);
        dy.tail(n) = -g.head(n);
        return dy;
    };
    Vec y = z.flat();
    rk4_integrate(y, t0, t1, steps, rhs, NoObserver{});
    return PhasePoint::from_flat(y);
}

TangentFlowResult tangent_flow(const HamiltonianModel& H, const PhasePoint& z, double t0,
                               double t1, int steps) {
    if (z.dim() != H.dim()) throw DimensionMismatch("tangent_flow: point dim vs model dim");
    const int n = H.dim();
    const int zdim = 2 * n;
    auto rhs = [&](double t, const Vec& y) -> Vec {
        const Vec q = y.head(n);
        const Vec p = y.segment(n, n);
        const Vec g = H.gradient(q, p, t);
        const Mat M = variational_matrix(H.hessian(q, p, t), n);
        const Eigen::Map<const Mat> U(y.data() + zdim, zdim, zdim);
        Vec dy(y.size());
        dy.head(n) = g.tail(n);
        dy.segment(n, n) = -g.head(n);
        Eigen::Map<Mat>(dy.data() + zdim, zdim, zdim) = M * U;
        return dy;
    };

    Vec y(zdim + zdim * zdim);
    y.head(zdim) = z.flat();
    Eigen::Map<Mat>(y.data() + zdim, zdim, zdim) = Mat::Identity(zdim, zdim);

    TangentFlowResult out;
    out.times.reserve(steps + 1);
    out.states.reserve(steps + 1);
    out.frames.reserve(steps + 1);
    auto observe = [&](int, double t, const Vec& cur) {
        out.times.push_back(t);
        out.states.push_back(PhasePoint(cur.head(n), cur.segment(n, n)));
        out.frames.push_back(Eigen::Map<const Mat>(cur.data() + zdim, zdim, zdim));
    };
    rk4_integrate(y, t0, t1, steps, rhs, observe);
    return out;
}

OpticalBounds estimate_optical_bounds(const HamiltonianModel& H, double p_max,
                                      const BoundsSampling& sampling) {
    const int n = H.dim();
    if (!(p_max > 0)) throw Error("estimate_optical_bounds: p_max must be positive");

    int qa = std::max(2, sampling.q_per_axis);
    int pa = std::max(2, sampling.p_per_axis);
    const int ts = std::max(1, sampling.t_samples);
    auto total = [&] { return std::pow(double(qa), n) * std::pow(double(pa), n) * ts; };
    while (total() > 3e5 && (qa > 3 || pa > 3)) {
        if (qa >= pa)
            --qa;
        else
            --pa;
    }

    OpticalBounds out;
    out.p_max = p_max;
    double lam_min = std::numeric_limits<double>::infinity();
    double lam_max = 0.0;
    double K = 0.0;

    Eigen::SelfAdjointEigenSolver<Mat> es;
    auto probe = [&](const Vec& q, const Vec& p, double t) {
        const Mat hess = H.hessian(q, p, t);
        K = std::max(K, op_norm(hess));
        es.compute(hess.bottomRightCorner(n, n), Eigen::EigenvaluesOnly);
        lam_min = std::min(lam_min, es.eigenvalues().minCoeff());
        lam_max = std::max(lam_max, es.eigenvalues().maxCoeff());
        ++out.sample_count;
    };

    std::vector<int> idx(2 * n, 0);
    Vec q(n), p(n);
    for (;;) {
        for (int i = 0; i < n; ++i) q[i] = static_cast<double>(idx[i]) / qa;
        for (int i = 0; i < n; ++i)
            p[i] = -p_max + 2.0 * p_max * static_cast<double>(idx[n + i]) / (pa - 1);
        for (int j = 0; j < ts; ++j)
            probe(q, p, ts == 1 ? 0.0 : sampling.t_max * j / (ts - 1));
        int j = 0;
        while (j < 2 * n) {
            const int lim = j < n ? qa : pa;
            if (++idx[j] < lim) break;
            idx[j++] = 0;
        }
        if (j == 2 * n) break;
    }
    UniformSampler rng(sampling.seed);
    for (int s = 0; s < sampling.random_samples; ++s)
        probe(rng.vector(n, 0.0, 1.0), rng.vector(n, -p_max, p_max),
              rng.next(0.0, sampling.t_max));

    if (!(lam_min > 1e-9)) {
        std::ostringstream os;
        os << H.label() << ": H_pp is not uniformly positive definite (sampled min eigenvalue "
           << lam_min << ")";
        throw OpticalityViolation(os.str());
    }
    out.C = std::min(lam_min, 1.0 / lam_max);
    out.K = std::max(K, 1e-12);
    return out;
}

double default_p_max(const std::vector<OrbitClass>& classes) {
    double m_over_d = 0.0;
    for (const auto& cls : classes)
        for (int i = 0; i < cls.m.size(); ++i)
            m_over_d = std::max(m_over_d, std::fabs(double(cls.m[i])) / cls.d);
    return 4.0 * m_over_d + 2.0;
}

GronwallReport gronwall_check(const HamiltonianModel& H, const PhasePoint& z, double t0,
                              double t1, double Kbound, int steps) {
    if (!(Kbound > 0)) throw Error("gronwall_check: Kbound must be positive");
    const auto traj = tangent_flow(H, z, t0, t1, steps);
    const int zdim = 2 * H.dim();
    const Mat I = Mat::Identity(zdim, zdim);

    GronwallReport rep;
    rep.K = Kbound;
    for (size_t k = 0; k < traj.times.size(); ++k) {
        const double t = traj.times[k];
        rep.sup_hessian = std::max(
            rep.sup_hessian, op_norm(H.hessian(traj.states[k].q, traj.states[k].p, t)));
        if (k == 0) continue;
        const double dt = std::fabs(t - t0);
        const double bound = Kbound * dt * std::exp(Kbound * dt);
        const double ratio = op_norm(traj.frames[k] - I) / bound;
        if (ratio > rep.max_ratio) {
            rep.max_ratio = ratio;
            rep.worst_time = t;
        }
    }
    if (rep.sup_hessian > Kbound * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << "gronwall_check: Kbound " << Kbound << " underestimates the sampled sup |hess H| = "
           << rep.sup_hessian;
        throw BoundViolation(os.str());
    }
    if (rep.max_ratio >= 1.0) {
        std::ostringstream os;
        os << "gronwall_check: tangent growth bound fails at t = " << rep.worst_time
           << " (ratio " << rep.max_ratio << "); Kbound " << Kbound << " is underestimated";
        throw BoundViolation(os.str());
    }
    return rep;
}

TwistBlockReport twist_block(const HamiltonianModel& H, const PhasePoint& z, double epsilon,
                             const OpticalBounds& bounds, int steps, double t0) {
    if (!(epsilon > 0)) throw Error("twist_block: epsilon must be positive");
    const int n = H.dim();
    const auto traj = tangent_flow(H, z, t0, t0 + epsilon, steps);

    TwistBlockReport rep;
    rep.epsilon = epsilon;
    rep.b = traj.final_frame().topRightCorner(n, n);
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (rep.b + rep.b.transpose()),
                                          Eigen::EigenvaluesOnly);
    rep.eig_min = es.eigenvalues().minCoeff();
    rep.eig_max = es.eigenvalues().maxCoeff();
    rep.bound_lo = epsilon * bounds.C - bounds.K * epsilon * epsilon;
    rep.bound_hi = epsilon / bounds.C + bounds.K * epsilon * epsilon;
    rep.admissible = rep.bound_lo > 0.0;
    if (rep.eig_min <= 0.0) {
        std::ostringstream os;
        os << "twist_block: block not positive definite at eps = " << epsilon
           << " (min eigenvalue " << rep.eig_min << ")";
        if (!rep.admissible) os << "; eps is outside the admissible window";
        throw PositivityFailure(os.str());
    }
    return rep;
}

int choose_N(const OpticalBounds& bounds, double safety) {
    if (!(safety >= 1.0)) throw Error("choose_N: safety factor must be >= 1");
    if (!(bounds.C > 0) || !(bounds.K > 0)) throw Error("choose_N: bounds not certified");
    int N = std::max(1, static_cast<int>(std::ceil(safety * bounds.K / bounds.C)));
    while (bounds.C / N - bounds.K / (double(N) * N) <= 0.0) ++N;
    return N;
}

ShortTimeGenFun::ShortTimeGenFun(HamiltonianPtr H, double t0, double eps, ShootingParams params)
    : H_(std::move(H)), t0_(t0), eps_(eps), params_(params) {
    if (!H_) throw Error("ShortTimeGenFun: null model");
    if (!(eps_ > 0)) throw Error("ShortTimeGenFun: eps must be positive");
}

std::string ShortTimeGenFun::label() const {
    std::ostringstream os;
    os << "stint[" << t0_ << "," << t0_ + eps_ << "]of " << H_->label();
    return os.str();
}

ShortTimeGenFun::Stint ShortTimeGenFun::solve(const Vec& q, const Vec& Q) const {
    const int n = dim();
    require_same_dim(q, Q, "ShortTimeGenFun::solve");
    require_finite(q, "ShortTimeGenFun q");
    require_finite(Q, "ShortTimeGenFun Q");

    std::vector<long long> key(2 * n);
    for (int i = 0; i < n; ++i) key[i] = std::llround(q[i] * 1e12);
    for (int i = 0; i < n; ++i) key[n + i] = std::llround(Q[i] * 1e12);
    {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }

    const int zdim = 2 * n;
    // Augmented state: (q, p, U, action integral).
    auto rhs = [&](double t, const Vec& y) -> Vec {
        const Vec qq = y.head(n);
        const Vec pp = y.segment(n, n);
        const Vec g = H_->gradient(qq, pp, t);
        const Mat M = variational_matrix(H_->hessian(qq, pp, t), n);
        const Eigen::Map<const Mat> U(y.data() + zdim, zdim, zdim);
        Vec dy(y.size());
        dy.head(n) = g.tail(n);
        dy.segment(n, n) = -g.head(n);
        Eigen::Map<Mat>(dy.data() + zdim, zdim, zdim) = M * U;
        dy[zdim + zdim * zdim] = pp.dot(g.tail(n)) - H_->value(qq, pp, t);
        return dy;
    };

    struct Shot {
        Vec qT, pT;
        Mat B;
        double action;
        double resid;
    };
    auto integrate = [&](const Vec& p0) -> Shot {
        Vec y = Vec::Zero(zdim + zdim * zdim + 1);
        y.head(n) = q;
        y.segment(n, n) = p0;
        Eigen::Map<Mat>(y.data() + zdim, zdim, zdim) = Mat::Identity(zdim, zdim);
        rk4_integrate(y, t0_, t0_ + eps_, params_.substeps, rhs, NoObserver{});
        Shot s;
        s.qT = y.head(n);
        s.pT = y.segment(n, n);
        s.B = Eigen::Map<const Mat>(y.data() + zdim, zdim, zdim).topRightCorner(n, n);
        s.action = y[zdim + zdim * zdim];
        s.resid = (s.qT - Q).lpNorm<Eigen::Infinity>();
        return s;
    };

    // First guess from the local metric: displacement = eps H_pp p0.
    Vec p0;
    {
        const Vec mid = 0.5 * (q + Q);
        const Vec v = (Q - q) / eps_;
        const Mat Hpp = H_->hessian(mid, v, t0_ + 0.5 * eps_).bottomRightCorner(n, n);
        p0 = Hpp.ldlt().solve(v);
        if (!p0.allFinite()) p0 = v;
    }

    Shot shot = integrate(p0);
    for (int it = 0; it < params_.max_iter && shot.resid >= params_.tol; ++it) {
        const Vec step = shot.B.partialPivLu().solve(Q - shot.qT);
        if (!step.allFinite())
            throw ShootingDivergence(label() + ": singular twist block in shooting solve");
        double lambda = 1.0;
        bool accepted = false;
        while (lambda > 1e-8) {
            const Vec cand = p0 + lambda * step;
            Shot trial = integrate(cand);
            if (trial.resid < shot.resid * (1.0 - 1e-4 * lambda)) {
                p0 = cand;
                shot = std::move(trial);
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if (!accepted) break;
    }
    if (shot.resid >= 1e2 * params_.tol) {
        std::ostringstream os;
        os << label() << ": shooting failed to meet the boundary condition, residual "
           << shot.resid;
        throw ShootingDivergence(os.str());
    }

    Stint out{p0, shot.pT, shot.action};
    std::lock_guard<std::mutex> lock(cache_mutex_);
    cache_.emplace(std::move(key), out);
    return out;
}

Mat ShortTimeGenFun::d11(const Vec& q, const Vec& Q) const {
    const int n = dim();
    const double h = params_.fd_step;
    Mat out(n, n);
    for (int j = 0; j < n; ++j) {
        Vec e = Vec::Zero(n);
        e[j] = h;
        out.col(j) = -(solve(q + e, Q).p0 - solve(q - e, Q).p0) / (2.0 * h);
    }
    return out;
}

Mat ShortTimeGenFun::d12(const Vec& q, const Vec& Q) const {
    const int n = dim();
    const double h = params_.fd_step;
    Mat out(n, n);
    for (int j = 0; j < n; ++j) {
        Vec e = Vec::Zero(n);
        e[j] = h;
        out.col(j) = -(solve(q, Q + e).p0 - solve(q, Q - e).p0) / (2.0 * h);
    }
    return out;
}

Mat ShortTimeGenFun::d22(const Vec& q, const Vec& Q) const {
    const int n = dim();
    const double h = params_.fd_step;
    Mat out(n, n);
    for (int j = 0; j < n; ++j) {
        Vec e = Vec::Zero(n);
        e[j] = h;
        out.col(j) = (solve(q, Q + e).P1 - solve(q, Q - e).P1) / (2.0 * h);
    }
    return out;
}

FlowTwistMap::FlowTwistMap(HamiltonianPtr H, double t0, double eps, ShootingParams params)
    : TwistMap(std::make_shared<ShortTimeGenFun>(H, t0, eps, params),
               NewtonParams{params.tol, params.max_iter}),
      H_(std::move(H)),
      t0_(t0),
      eps_(eps),
      substeps_(params.substeps) {}

PhasePoint FlowTwistMap::forward(const PhasePoint& z) const {
    return flow(*H_, z, t0_, t0_ + eps_, substeps_);
}

PhasePoint FlowTwistMap::inverse(const PhasePoint& z) const {
    return flow(*H_, z, t0_ + eps_, t0_, substeps_);
}

Mat FlowTwistMap::tangent(const PhasePoint& z) const {
    return tangent_flow(*H_, z, t0_, t0_ + eps_, substeps_).final_frame();
}

std::string FlowTwistMap::label() const {
    std::ostringstream os;
    os << "flow[" << t0_ << "," << t0_ + eps_ << "]of " << H_->label();
    return os.str();
}

const ShortTimeGenFun& FlowTwistMap::short_time_genfun() const {
    return static_cast<const ShortTimeGenFun&>(genfun());
}

MapChain DecompositionPlan::chain() const {
    std::vector<TwistMapPtr> maps(steps.begin(), steps.end());
    return MapChain(std::move(maps));
}

std::vector<GenFunPtr> DecompositionPlan::genfuns() const {
    std::vector<GenFunPtr> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s->genfun_ptr());
    return out;
}

DecompositionPlan decompose(HamiltonianPtr H, const OpticalBounds& bounds, double safety,
                            const ShootingParams& params, int cert_per_axis, int cert_random) {
    if (!H) throw Error("decompose: null model");
    DecompositionPlan plan;
    plan.H = H;
    plan.bounds = bounds;
    plan.N = choose_N(bounds, safety);
    const double eps = 1.0 / plan.N;

    for (int k = 0; k < plan.N; ++k) {
        auto step = std::make_shared<FlowTwistMap>(H, k * eps, eps, params);
        ConvexitySampling cs;
        cs.per_axis = cert_per_axis;
        cs.random_samples = cert_random;
        cs.displacement =
            std::max(0.15, 1.25 * eps * std::max(bounds.p_max, 1.0) / std::max(bounds.C, 0.5));
        cs.seed = 29 + static_cast<std::uint64_t>(k);
        plan.constants.push_back(certify_convexity(step->short_time_genfun(), cs));
        plan.steps.push_back(std::move(step));
    }
    return plan;
}

double verify_md_point(const HamiltonianModel& H, const PhasePoint& z, const OrbitClass& cls,
                       int steps_per_unit) {
    if (cls.m.size() != H.dim()) throw DimensionMismatch("verify_md_point: class dim");
    const PhasePoint w = flow(H, z, 0.0, cls.d, steps_per_unit * cls.d);
    Vec target = z.flat();
    target.head(H.dim()) += cls.m.cast<double>();
    return (w.flat() - target).lpNorm<Eigen::Infinity>();
}

}  // namespace stmap
