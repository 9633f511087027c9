#include "stmap/orbits.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace stmap {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

Vec newton_direction(const ActionEvaluator& W, const Mat& H, const Vec& g) {
    Vec step;
    if (cyclic_block_tridiag_solve(H, Vec(-g), W.dim(), step)) return step;
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(H);
    return cod.solve(-g);
}

double deflation_factor(const Configuration& c, const std::vector<Configuration>& known,
                        double r0) {
    double f = 1.0;
    for (const auto& k : known) {
        double dist = quotient_distance(c, k);
        dist = std::max(dist, 1e-14);
        f *= 1.0 + (r0 * r0) / (dist * dist);
    }
    return f;
}

/// Newton iteration on grad W = 0, line-searched on the deflated merit
/// 1/2 |grad W|^2 prod_r (1 + r0^2 / dist_r^2). Known roots repel the
/// iteration; converging onto one makes every trial step fail.
std::optional<Configuration> newton_search(const ActionEvaluator& W, Configuration c,
                                           const std::vector<Configuration>& known,
                                           const SearchTolerances& tol) {
    auto merit = [&](const Configuration& x, const Vec& g) {
        return 0.5 * g.squaredNorm() * deflation_factor(x, known, tol.deflation_radius);
    };

    Vec g = W.gradient(c);
    double m = merit(c, g);
    for (int it = 0; it < tol.max_newton_iter; ++it) {
        if (g.lpNorm<Eigen::Infinity>() < tol.residual) return c;
        Vec dir = newton_direction(W, W.hessian(c), g);
        if (!dir.allFinite()) return std::nullopt;

        const Vec base = c.flat();
        bool accepted = false;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            double lambda = 1.0;
            while (lambda > 1e-10) {
                bool ok = true;
                Configuration cand;
                Vec gc;
                double mc = std::numeric_limits<double>::infinity();
                try {
                    cand = W.configuration(base + lambda * dir);
                    gc = W.gradient(cand);
                    mc = merit(cand, gc);
                } catch (const Error&) {
                    ok = false;
                }
                if (ok && mc < m * (1.0 - 1e-4 * lambda)) {
                    c = std::move(cand);
                    g = std::move(gc);
                    m = mc;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            // Newton direction rejected: retry once along the steepest
            // descent direction of the undeflated merit.
            if (!accepted && attempt == 0) {
                dir = -(W.hessian(c) * g);
                const double len = dir.lpNorm<Eigen::Infinity>();
                if (!(len > 0)) return std::nullopt;
                dir *= std::min(1.0, 0.5 / len);
            }
        }
        if (!accepted) return std::nullopt;
    }
    return g.lpNorm<Eigen::Infinity>() < tol.residual ? std::optional<Configuration>(std::move(c))
                                                      : std::nullopt;
}

/// Undeflated Newton polish below the residual tolerance. Keeps stepping
/// while the residual improves; this walks degenerate valleys (where the
/// gradient vanishes to higher order) down to the noise floor instead of
/// stopping at the first point that merely meets the tolerance.
Configuration polish(const ActionEvaluator& W, Configuration c, const SearchTolerances& tol) {
    double res = W.gradient(c).lpNorm<Eigen::Infinity>();
    for (int it = 0; it < tol.max_polish_iter && res > 0.0; ++it) {
        const Vec g = W.gradient(c);
        Vec step = newton_direction(W, W.hessian(c), g);
        if (!step.allFinite() || step.lpNorm<Eigen::Infinity>() < 1e-13) break;
        bool improved = false;
        for (double lambda = 1.0; lambda > 0.2; lambda *= 0.5) {
            const Configuration cand = W.configuration(c.flat() + lambda * step);
            const double rc = W.critical_residual(cand);
            if (rc < res) {
                c = cand;
                res = rc;
                improved = true;
                break;
            }
        }
        if (!improved) break;
    }
    return c;
}

OrbitRecord make_record(const ActionEvaluator& W, const Configuration& raw,
                        const SearchTolerances& tol) {
    CanonicalForm cf = canonicalize(raw);
    Configuration c = reconstruct(cf, W.orbit_class());
    OrbitRecord rec;
    rec.action = W.value(c);
    rec.residual = W.critical_residual(c);
    rec.points = W.to_orbit(c, std::max(1e2 * tol.residual, 1e-8));
    rec.spectrum = hessian_spectrum(W, c, tol.degeneracy);
    rec.config = std::move(c);
    rec.canonical = std::move(cf);
    return rec;
}

std::vector<Configuration> build_starts(const ActionEvaluator& W, const SearchBudget& budget) {
    const int n = W.dim();
    const int d = W.orbit_class().d;
    const int dN = W.points();
    std::vector<Configuration> out;

    const int g = std::max(1, budget.grid_per_axis);
    std::vector<int> idx(n, 0);
    for (;;) {
        Vec v(n);
        for (int i = 0; i < n; ++i) v[i] = static_cast<double>(idx[i]) / g;
        // One unperturbed start per grid node, plus d-1 gap patterns that
        // break the cyclic symmetry of the zero-gap configuration.
        for (int j = 0; j < d; ++j) {
            CanonicalForm cf;
            cf.v = v;
            cf.gaps.assign(dN, Vec::Zero(n));
            for (int k = 0; j > 0 && k < dN; ++k)
                cf.gaps[k] = Vec::Constant(n, 0.1 * std::cos(kTwoPi * j * (k + 1) / dN));
            out.push_back(reconstruct(cf, W.orbit_class()));
        }
        int i = 0;
        while (i < n && ++idx[i] == g) idx[i++] = 0;
        if (i == n) break;
    }

    UniformSampler rng(budget.seed);
    for (int s = 0; s < budget.random_starts; ++s) {
        CanonicalForm cf;
        cf.v = rng.vector(n, 0.0, 1.0);
        cf.gaps.resize(dN);
        for (int k = 0; k < dN; ++k) cf.gaps[k] = rng.vector(n, -0.25, 0.25);
        out.push_back(reconstruct(cf, W.orbit_class()));
    }
    return out;
}

void require_prime(const OrbitClass& cls, const char* what) {
    if (!cls.prime())
        throw NonPrimeClass(std::string(what) + ": class " + cls.str() +
                            " is a multiple cover; reduce (m,d) by their common divisor");
}

}  // namespace

SpectralData hessian_spectrum(const ActionEvaluator& W, const Configuration& c,
                              double degeneracy_tol) {
    Eigen::SelfAdjointEigenSolver<Mat> es(W.hessian(c), Eigen::EigenvaluesOnly);
    SpectralData out;
    out.eigenvalues = es.eigenvalues();
    out.min_abs_eig = out.eigenvalues.cwiseAbs().minCoeff();
    const double cutoff =
        degeneracy_tol * std::max(1.0, out.eigenvalues.cwiseAbs().maxCoeff());
    bool degenerate = false;
    int negatives = 0;
    for (Eigen::Index i = 0; i < out.eigenvalues.size(); ++i) {
        if (std::fabs(out.eigenvalues[i]) <= cutoff)
            degenerate = true;
        else if (out.eigenvalues[i] < 0.0)
            ++negatives;
    }
    if (!degenerate) out.morse_index = negatives;
    return out;
}

std::optional<OrbitRecord> refine_critical_point(const ActionEvaluator& W,
                                                 const Configuration& start,
                                                 const SearchTolerances& tol) {
    try {
        auto c = newton_search(W, start, {}, tol);
        if (!c) return std::nullopt;
        return make_record(W, polish(W, std::move(*c), tol), tol);
    } catch (const Error&) {
        return std::nullopt;
    }
}

std::vector<OrbitRecord> find_critical_points(const ActionEvaluator& W,
                                              const SearchBudget& budget,
                                              const SearchTolerances& tol) {
    require_prime(W.orbit_class(), "find_critical_points");
    const auto starts = build_starts(W, budget);

    std::vector<OrbitRecord> found;
    std::vector<Configuration> registry;

    auto distance_to_registry = [&](const Configuration& c) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& r : registry) best = std::min(best, quotient_distance(c, r));
        return best;
    };

    // Fixed-size batches with the deflation registry frozen per batch and a
    // sequential in-order merge: the outcome is identical for any number of
    // worker threads.
    constexpr std::size_t kBatch = 16;
    const int workers = std::max(1, budget.threads);
    for (std::size_t lo = 0; lo < starts.size(); lo += kBatch) {
        const std::size_t hi = std::min(starts.size(), lo + kBatch);
        std::vector<std::optional<Configuration>> results(hi - lo);

        auto run_one = [&](std::size_t i) {
            try {
                auto c = newton_search(W, starts[lo + i], registry, tol);
                if (c) results[i] = polish(W, std::move(*c), tol);
            } catch (const Error&) {
            }
        };
        if (workers == 1 || hi - lo == 1) {
            for (std::size_t i = 0; i < hi - lo; ++i) run_one(i);
        } else {
            std::atomic<std::size_t> cursor{0};
            std::vector<std::thread> pool;
            const std::size_t nthread = std::min<std::size_t>(workers, hi - lo);
            pool.reserve(nthread);
            for (std::size_t w = 0; w < nthread; ++w)
                pool.emplace_back([&] {
                    for (std::size_t i = cursor.fetch_add(1); i < results.size();
                         i = cursor.fetch_add(1))
                        run_one(i);
                });
            for (auto& th : pool) th.join();
        }

        for (auto& r : results) {
            if (!r) continue;
            try {
                OrbitRecord rec = make_record(W, *r, tol);
                if (rec.residual >= 1e2 * tol.residual) continue;
                if (distance_to_registry(rec.config) < tol.dedup) continue;
                registry.push_back(rec.config);
                found.push_back(std::move(rec));
            } catch (const Error&) {
            }
        }
    }

    std::sort(found.begin(), found.end(), [](const OrbitRecord& a, const OrbitRecord& b) {
        if (a.action != b.action) return a.action < b.action;
        const Vec& va = a.canonical.v;
        const Vec& vb = b.canonical.v;
        for (Eigen::Index i = 0; i < va.size(); ++i)
            if (va[i] != vb[i]) return va[i] < vb[i];
        return false;
    });
    return found;
}

OrbitRecord minimize_action(const ActionEvaluator& W, const SearchBudget& budget,
                            const SearchTolerances& tol) {
    require_prime(W.orbit_class(), "minimize_action");
    const auto starts = build_starts(W, budget);

    // Armijo descent on W from every start; Newton only polishes the
    // winner, so saddle points cannot shadow the minimum.
    Configuration best;
    double best_value = std::numeric_limits<double>::infinity();
    for (const auto& start : starts) {
        try {
            Configuration c = start;
            double w = W.value(c);
            for (int it = 0; it < 400; ++it) {
                const Vec g = W.gradient(c);
                const double gnorm = g.lpNorm<Eigen::Infinity>();
                if (gnorm < 1e-9) break;
                double lambda = std::min(1.0, 1.0 / gnorm);
                bool moved = false;
                while (lambda > 1e-14) {
                    const Configuration cand = W.configuration(c.flat() - lambda * g);
                    const double wc = W.value(cand);
                    if (wc < w - 1e-4 * lambda * g.squaredNorm()) {
                        c = cand;
                        w = wc;
                        moved = true;
                        break;
                    }
                    lambda *= 0.5;
                }
                if (!moved) break;
            }
            if (w < best_value) {
                best_value = w;
                best = c;
            }
        } catch (const Error&) {
        }
    }
    if (!std::isfinite(best_value)) throw Error("minimize_action: every descent start failed");

    auto rec = refine_critical_point(W, best, tol);
    if (!rec)
        throw NotCritical("minimize_action: descent endpoint did not converge to a critical point");
    return std::move(*rec);
}

OrbitCountReport count_report(const std::vector<OrbitRecord>& records, int n) {
    OrbitCountReport rep;
    rep.found = static_cast<int>(records.size());
    rep.min_distinct = n + 1;
    rep.min_distinct_nondegenerate = 1 << n;
    rep.all_nondegenerate = !records.empty();
    for (const auto& r : records) {
        if (r.spectrum.morse_index)
            ++rep.index_census[*r.spectrum.morse_index];
        else
            rep.all_nondegenerate = false;
    }
    return rep;
}

}  // namespace stmap
