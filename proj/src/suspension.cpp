#include "stmap/suspension.hpp"

#include <cmath>
#include <sstream>

namespace stmap {

namespace {
constexpr double kPi = 3.1415926535897932384626433832795;
}

double suspension_profile(double t) {
    if (!(t > 0.0) || !(t <= 1.0)) throw Error("suspension_profile: t must be in (0,1]");
    const double s = std::sin(kPi * t);
    return t <= 0.5 ? 1.0 / (s * s) : s * s;
}

double suspension_profile_dt(double t) {
    if (!(t > 0.0) || !(t <= 1.0)) throw Error("suspension_profile_dt: t must be in (0,1]");
    if (t <= 0.5) {
        const double s = std::sin(kPi * t);
        return -2.0 * kPi * std::cos(kPi * t) / (s * s * s);
    }
    return kPi * std::sin(2.0 * kPi * t);
}

namespace {

/// S_t of the family for one fixed t.
class SuspendedGenFun : public GeneratingFunction {
public:
    SuspendedGenFun(GenFunPtr S, double a, double t)
        : S_(std::move(S)), a_(a), t_(t), f_(suspension_profile(t)), blend_(t > 0.5) {}

    int dim() const override { return S_->dim(); }

    double eval(const Vec& q, const Vec& Q) const override {
        const double quad = 0.5 * a_ * f_ * (Q - q).squaredNorm();
        return blend_ ? quad + (1.0 - f_) * S_->eval(q, Q) : quad;
    }
    Vec d1(const Vec& q, const Vec& Q) const override {
        const Vec lin = -a_ * f_ * (Q - q);
        return blend_ ? Vec(lin + (1.0 - f_) * S_->d1(q, Q)) : lin;
    }
    Vec d2(const Vec& q, const Vec& Q) const override {
        const Vec lin = a_ * f_ * (Q - q);
        return blend_ ? Vec(lin + (1.0 - f_) * S_->d2(q, Q)) : lin;
    }
    Mat d11(const Vec& q, const Vec& Q) const override {
        const Mat base = a_ * f_ * Mat::Identity(dim(), dim());
        return blend_ ? Mat(base + (1.0 - f_) * S_->d11(q, Q)) : base;
    }
    Mat d12(const Vec& q, const Vec& Q) const override {
        const Mat base = -a_ * f_ * Mat::Identity(dim(), dim());
        return blend_ ? Mat(base + (1.0 - f_) * S_->d12(q, Q)) : base;
    }
    Mat d22(const Vec& q, const Vec& Q) const override {
        const Mat base = a_ * f_ * Mat::Identity(dim(), dim());
        return blend_ ? Mat(base + (1.0 - f_) * S_->d22(q, Q)) : base;
    }
    std::string label() const override {
        std::ostringstream os;
        os << "suspended(t=" << t_ << ")of " << S_->label();
        return os.str();
    }

private:
    GenFunPtr S_;
    double a_, t_, f_;
    bool blend_;
};

}  // namespace

Suspension::Suspension(GenFunPtr target, double a, NewtonParams newton)
    : target_(std::move(target)), a_(a), newton_(newton) {
    if (!target_) throw Error("Suspension: null target");
    if (!(a_ > 0.0)) throw Error("Suspension: convexity constant must be positive");
}

GenFunPtr Suspension::genfun(double t) const {
    return std::make_shared<SuspendedGenFun>(target_, a_, t);
}

double Suspension::genfun_value(double t, const Vec& q, const Vec& Q) const {
    return SuspendedGenFun(target_, a_, t).eval(q, Q);
}

double Suspension::genfun_dt(double t, const Vec& q, const Vec& Q) const {
    const double df = suspension_profile_dt(t);
    const double quad = 0.5 * a_ * (Q - q).squaredNorm();
    if (t <= 0.5) return df * quad;
    return df * (quad - target_->eval(q, Q));
}

PhasePoint Suspension::map(double t, const PhasePoint& z) const {
    if (t == 0.0) return z;
    if (t <= 0.5) {
        const double af = a_ * suspension_profile(t);
        return PhasePoint(z.q + z.p / af, z.p);
    }
    return TwistMap(genfun(t), newton_).forward(z);
}

PhasePoint Suspension::inverse_map(double t, const PhasePoint& z) const {
    if (t == 0.0) return z;
    if (t <= 0.5) {
        const double af = a_ * suspension_profile(t);
        return PhasePoint(z.q - z.p / af, z.p);
    }
    return TwistMap(genfun(t), newton_).inverse(z);
}

double Suspension::hamiltonian(double t, const PhasePoint& z) const {
    if (t == 0.0) return 0.0;
    if (t <= 0.5) {
        // -dS_t/dt at (q0, Q) with Q - q0 = p/(a f):  pi sin(2 pi t) |p|^2 / 2a.
        return kPi * std::sin(2.0 * kPi * t) * z.p.squaredNorm() / (2.0 * a_);
    }
    const PhasePoint w = inverse_map(t, z);
    return -genfun_dt(t, w.q, z.q);
}

Vec Suspension::vector_field(double t, const PhasePoint& z, const SuspensionParams& params) const {
    if (!(t >= 0.0) || !(t <= 1.0)) throw Error("vector_field: t must be in [0,1]");
    if (!(params.dt > 0.0)) throw Error("vector_field: dt must be positive");
    const PhasePoint w = inverse_map(t, z);
    const Vec here = z.flat();
    auto image = [&](double s) { return map(s, w).flat(); };
    auto stencil = [&](double h) -> Vec {
        if (t - h < 0.0) return (-3.0 * here + 4.0 * image(t + h) - image(t + 2.0 * h)) / (2.0 * h);
        if (t + h > 1.0) return (3.0 * here - 4.0 * image(t - h) + image(t - 2.0 * h)) / (2.0 * h);
        return (image(t + h) - image(t - h)) / (2.0 * h);
    };

    double h = params.dt;
    Vec x = stencil(h);
    for (int level = 0; level < params.richardson; ++level) {
        h *= 0.5;
        x = (4.0 * stencil(h) - x) / 3.0;
    }
    return x;
}

Vec Suspension::hamiltonian_field(double t, const PhasePoint& z, double dz) const {
    const int n = dim();
    Vec out(2 * n);
    for (int i = 0; i < n; ++i) {
        PhasePoint zp = z, zm = z;
        zp.p[i] += dz;
        zm.p[i] -= dz;
        out[i] = (hamiltonian(t, zp) - hamiltonian(t, zm)) / (2.0 * dz);
        zp = z;
        zm = z;
        zp.q[i] += dz;
        zm.q[i] -= dz;
        out[n + i] = -(hamiltonian(t, zp) - hamiltonian(t, zm)) / (2.0 * dz);
    }
    return out;
}

PhasePoint Suspension::transport(const PhasePoint& z, int steps,
                                 const SuspensionParams& params) const {
    if (steps < 1) throw Error("transport: steps must be >= 1");
    auto rhs = [&](double s, const Vec& cur) {
        return vector_field(s, PhasePoint::from_flat(cur), params);
    };
    Vec y = z.flat();
    const double h = 1.0 / steps;
    for (int k = 0; k < steps; ++k) {
        const double t = k * h;
        const Vec k1 = rhs(t, y);
        const Vec k2 = rhs(t + 0.5 * h, Vec(y + 0.5 * h * k1));
        const Vec k3 = rhs(t + 0.5 * h, Vec(y + 0.5 * h * k2));
        const Vec k4 = rhs(std::min(t + h, 1.0), Vec(y + h * k3));
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!y.allFinite()) throw NonFiniteValue("transport: state blew up");
    }
    return PhasePoint::from_flat(y);
}

double suspension_roundtrip_error(const Suspension& sus, const PhasePoint& z, int steps,
                                  const SuspensionParams& params) {
    const PhasePoint a = sus.transport(z, steps, params);
    const PhasePoint b = sus.map(1.0, z);
    return (a.flat() - b.flat()).lpNorm<Eigen::Infinity>();
}

double suspension_field_mismatch(const Suspension& sus, const std::vector<double>& times,
                                 const std::vector<PhasePoint>& points,
                                 const SuspensionParams& params) {
    double worst = 0.0;
    for (const double t : times)
        for (const auto& z : points) {
            const Vec dx = sus.vector_field(t, z, params) - sus.hamiltonian_field(t, z);
            worst = std::max(worst, dx.lpNorm<Eigen::Infinity>());
        }
    return worst;
}

double suspension_convexity_margin(const Suspension& sus, int t_samples,
                                   const ConvexitySampling& sampling) {
    if (t_samples < 1) throw Error("suspension_convexity_margin: need t_samples >= 1");
    double margin = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= t_samples; ++k) {
        const double t = static_cast<double>(k) / t_samples;
        margin = std::min(margin, certify_convexity(*sus.genfun(t), sampling).a);
    }
    return margin;
}

}  // namespace stmap
