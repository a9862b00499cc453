#include "qml/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "qml/lhs.hpp"
#include "qml/math.hpp"
#include "qml/nelder_mead.hpp"

namespace qml {

namespace {

constexpr double kReselectTol2 = 1e-18;  // squared distance guard against re-proposing a design point

// Round non-negative continuous shares to integers summing to `budget`
// (largest remainder, ties to the lowest index).
std::vector<long> largest_remainder(const Eigen::VectorXd& shares, long budget) {
    const int n = static_cast<int>(shares.size());
    std::vector<long> out(static_cast<size_t>(n), 0);
    if (budget <= 0 || n == 0) return out;
    double total = shares.sum();
    Eigen::VectorXd scaled = total > 0 ? (shares * (static_cast<double>(budget) / total)).eval()
                                       : Eigen::VectorXd::Constant(n, static_cast<double>(budget) / n);
    long assigned = 0;
    std::vector<double> frac(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double f = std::floor(scaled(i));
        out[static_cast<size_t>(i)] = static_cast<long>(f);
        assigned += static_cast<long>(f);
        frac[static_cast<size_t>(i)] = scaled(i) - f;
    }
    std::vector<int> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return frac[static_cast<size_t>(a)] > frac[static_cast<size_t>(b)];
    });
    for (long r = 0; r < budget - assigned && r < static_cast<long>(n); ++r) {
        ++out[static_cast<size_t>(idx[static_cast<size_t>(r)])];
    }
    // Guard against pathological rounding drift.
    long sum = std::accumulate(out.begin(), out.end(), 0L);
    int i = 0;
    while (sum < budget) {
        ++out[static_cast<size_t>(i % n)];
        ++sum;
        ++i;
    }
    while (sum > budget) {
        int j = i % n;
        if (out[static_cast<size_t>(j)] > 0) {
            --out[static_cast<size_t>(j)];
            --sum;
        }
        ++i;
    }
    return out;
}

bool near_any(const Eigen::VectorXd& x, const std::vector<Eigen::VectorXd>& pts) {
    for (const auto& p : pts) {
        if ((p - x).squaredNorm() < kReselectTol2) return true;
    }
    return false;
}

}  // namespace

void OptimizerConfig::validate(int dim) const {
    if (levels.empty()) throw std::invalid_argument("config: at least one quantile level required");
    double prev = 0.0;
    for (double a : levels) {
        if (!(a > prev && a < 1.0)) {
            throw std::invalid_argument("config: levels must be strictly increasing in (0,1)");
        }
        prev = a;
    }
    if (r0 < 1) throw std::invalid_argument("config: r0 must be >= 1");
    if (n_b < 2) throw std::invalid_argument("config: n_b must be >= 2");
    if (total_budget < 1) throw std::invalid_argument("config: total_budget must be positive");
    int d0 = d0_size > 0 ? d0_size : std::max(6, 2 * dim + 2);
    if (static_cast<long>(d0) * r0 > total_budget) {
        throw std::invalid_argument("config: initial design (d0_size * r0) exceeds total_budget");
    }
}

long OptimizerConfig::rk(int k) const {
    if (k <= 1) return r0;
    return r0 + static_cast<long>(std::ceil(std::pow(static_cast<double>(k - 1), rk_power)));
}

double expected_improvement(double z_star, double mean, double s) {
    const double diff = z_star - mean;
    if (s <= 0.0) return std::max(diff, 0.0);
    const double u = diff / s;
    return s * norm_pdf(u) + diff * norm_cdf(u);
}

long update_budget(long b_prev, long deficit, double max_noise_var, double spatial_var_new,
                   long remaining) {
    double ratio = 0.0;
    if (max_noise_var > 0.0 && max_noise_var + spatial_var_new > 0.0) {
        ratio = max_noise_var / (max_noise_var + spatial_var_new);
    }
    long growth = static_cast<long>(std::floor(static_cast<double>(b_prev) * (1.0 + ratio)));
    return std::min(std::max(deficit, growth), remaining);
}

std::vector<long> ocba_allocate(const Eigen::VectorXd& estimates, const Eigen::VectorXd& noise_vars,
                                long budget, bool classical) {
    const int n = static_cast<int>(estimates.size());
    if (noise_vars.size() != n) throw std::invalid_argument("ocba_allocate: size mismatch");
    std::vector<long> out(static_cast<size_t>(n), 0);
    if (budget <= 0 || n == 0) return out;
    if (n == 1) {
        out[0] = budget;
        return out;
    }

    int best = 0;
    for (int i = 1; i < n; ++i) {
        if (estimates(i) < estimates(best)) best = i;
    }
    const double spread = estimates.maxCoeff() - estimates.minCoeff();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    if (spread <= 0.0) {
        // All estimates tie: uniform split.
        return largest_remainder(Eigen::VectorXd::Ones(n), budget);
    }
    const double eps = 1e-6 * spread;
    for (int i = 0; i < n; ++i) {
        if (i == best) continue;
        double lam = std::max(estimates(i) - estimates(best), eps);
        w(i) = std::sqrt(std::max(noise_vars(i), 0.0)) / lam;
    }
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        if (i == best || noise_vars(i) <= 0.0) continue;
        acc += classical ? w(i) * w(i) / noise_vars(i) : w(i) / noise_vars(i);
    }
    w(best) = std::sqrt(std::max(noise_vars(best), 0.0)) * std::sqrt(std::max(acc, 0.0));
    if (w.sum() <= 0.0) return largest_remainder(Eigen::VectorXd::Ones(n), budget);
    return largest_remainder(w, budget);
}

LevelUpdate update_levels(const std::vector<Eigen::VectorXd>& point_noise_diags, double c0,
                          int h_prev) {
    if (point_noise_diags.empty()) throw std::invalid_argument("update_levels: no design points");
    const int m = static_cast<int>(point_noise_diags.front().size());
    const int n = static_cast<int>(point_noise_diags.size());

    LevelUpdate lu;
    lu.accept_sets.assign(static_cast<size_t>(m), {});
    for (int i = 0; i < n; ++i) {
        int lstar = 0;
        for (int l = m; l >= 1; --l) {
            if (point_noise_diags[static_cast<size_t>(i)](l - 1) <= c0) {
                lstar = l;
                break;
            }
        }
        for (int l = 1; l <= lstar; ++l) lu.accept_sets[static_cast<size_t>(l - 1)].push_back(i);
    }

    int h = 0;
    for (int l = m; l >= 1; --l) {
        if (!lu.accept_sets[static_cast<size_t>(l - 1)].empty()) {
            h = l;
            break;
        }
    }
    if (h == 0) {
        lu.e1_empty_flagged = true;
        h = 1;
    }
    lu.h = std::max(h, std::min(h_prev, m));

    for (int j = 1; j <= lu.h; ++j) {
        bool redundant = false;
        for (int l = j + 1; l <= lu.h; ++l) {
            if (lu.accept_sets[static_cast<size_t>(l - 1)] == lu.accept_sets[static_cast<size_t>(j - 1)]) {
                redundant = true;
                break;
            }
        }
        if (!redundant) lu.pi.push_back(j);
    }
    if (lu.pi.empty() || lu.pi.back() != lu.h) lu.pi.push_back(lu.h);
    return lu;
}

double update_c0(double c0_prev, double eps_hat, long n_incumbent, long remaining, int n_design,
                 long b_k) {
    if (b_k <= 0) return c0_prev;
    double est_total_points = static_cast<double>(n_design) +
                              static_cast<double>(remaining) / static_cast<double>(b_k);
    double extra = est_total_points > 0 ? static_cast<double>(remaining) / est_total_points : 0.0;
    double cand = eps_hat * static_cast<double>(n_incumbent) /
                  (static_cast<double>(n_incumbent) + extra);
    return std::max(c0_prev, cand);
}

SearchResult ei_search(const CoKrigeModel& model, int level, double z_star, const Box& domain,
                       const std::vector<Eigen::VectorXd>& existing, int candidates, uint64_t seed) {
    const int d = domain.dim();
    Eigen::MatrixXd cand = scale_to_box(latin_hypercube(candidates, d, seed), domain.lower,
                                        domain.upper);

    struct Scored {
        Eigen::VectorXd x;
        double ei;
        double svar;
    };
    std::vector<Scored> scored;
    scored.reserve(static_cast<size_t>(cand.rows()));
    for (int i = 0; i < cand.rows(); ++i) {
        Eigen::VectorXd x = cand.row(i).transpose();
        if (near_any(x, existing)) continue;
        auto pred = model.predict(level, x);
        scored.push_back({x, expected_improvement(z_star, pred.mean, std::sqrt(pred.var_spatial)),
                          pred.var_spatial});
    }
    SearchResult out;
    if (scored.empty()) {
        // Degenerate candidate set; fall back to the domain center.
        out.x = domain.center();
        auto pred = model.predict(level, out.x);
        out.spatial_var = pred.var_spatial;
        out.exploration_fallback = true;
        return out;
    }

    std::vector<int> order(scored.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scored[static_cast<size_t>(a)].ei > scored[static_cast<size_t>(b)].ei;
    });

    auto neg_ei = [&](const Eigen::VectorXd& x) {
        auto pred = model.predict(level, x);
        return -expected_improvement(z_star, pred.mean, std::sqrt(pred.var_spatial));
    };
    NelderMeadOptions nm;
    nm.max_evals = 60;
    nm.init_step_frac = 0.03;
    Eigen::VectorXd best_x = scored[static_cast<size_t>(order[0])].x;
    double best_ei = scored[static_cast<size_t>(order[0])].ei;
    for (size_t s = 0; s < std::min<size_t>(5, order.size()); ++s) {
        auto res = nelder_mead_minimize(neg_ei, scored[static_cast<size_t>(order[s])].x,
                                        domain.lower, domain.upper, nm);
        if (-res.f > best_ei && !near_any(res.x, existing)) {
            best_ei = -res.f;
            best_x = res.x;
        }
    }

    if (best_ei < 1e-12) {
        // No candidate improves; explore where spatial uncertainty is largest.
        out.exploration_fallback = true;
        double best_var = -1.0;
        for (const auto& sc : scored) {
            if (sc.svar > best_var) {
                best_var = sc.svar;
                out.x = sc.x;
            }
        }
        out.spatial_var = best_var;
        return out;
    }
    out.x = best_x;
    out.ei = best_ei;
    out.spatial_var = model.predict(level, best_x).var_spatial;
    return out;
}

namespace {

// Mutable run state shared by the stage helpers.
struct RunState {
    const OptimizerConfig* cfg = nullptr;
    const LossProblem* prob = nullptr;
    std::vector<DesignPoint> design;
    std::shared_ptr<const CoKrigeModel> model;
    std::vector<int> pi{1};  // 1-based level indices of the current model
    int h = 1;
    double c0 = 0.0;
    long spent = 0;
    double z_star = 0.0;
    int r0 = 0;

    long remaining() const { return cfg->total_budget - spent; }
    int m() const { return static_cast<int>(cfg->levels.size()); }
};

void simulate_at(RunState& st, DesignPoint& pt, long n) {
    if (n <= 0) return;
    RngStream stream(st.cfg->seed, pt.point_index, static_cast<uint64_t>(pt.samples.size()));
    auto draws = st.prob->simulate(pt.x, static_cast<int>(n), stream);
    pt.samples.insert(pt.samples.end(), draws.begin(), draws.end());
    st.spent += n;
}

void refresh_panel(const RunState& st, DesignPoint& pt) {
    pt.panel = sectioning_panel(pt.samples, st.cfg->levels, st.cfg->n_b);
}

ModelInputs inputs_for_levels(const RunState& st, const std::vector<int>& pi) {
    ModelInputs in;
    const int n = static_cast<int>(st.design.size());
    const int mm = static_cast<int>(pi.size());
    in.design.resize(n, st.prob->dim());
    for (int i = 0; i < n; ++i) in.design.row(i) = st.design[static_cast<size_t>(i)].x.transpose();
    in.y.assign(static_cast<size_t>(mm), Eigen::VectorXd(n));
    in.point_noise.assign(static_cast<size_t>(n), Eigen::MatrixXd(mm, mm));
    for (int i = 0; i < n; ++i) {
        const QuantilePanel& panel = st.design[static_cast<size_t>(i)].panel;
        for (int a = 0; a < mm; ++a) {
            in.y[static_cast<size_t>(a)](i) = panel.point_estimates(pi[static_cast<size_t>(a)] - 1);
            for (int b = 0; b < mm; ++b) {
                in.point_noise[static_cast<size_t>(i)](a, b) =
                    panel.noise_cov(pi[static_cast<size_t>(a)] - 1, pi[static_cast<size_t>(b)] - 1);
            }
        }
    }
    in.domain = st.prob->domain();
    return in;
}

std::shared_ptr<const CoKrigeModel> fit_model(const RunState& st, const std::vector<int>& pi,
                                              int starts, uint64_t salt) {
    ModelInputs in = inputs_for_levels(st, pi);
    HyperBounds bounds = HyperBounds::defaults(in.domain, in.y);
    FitOptions opts;
    opts.lambda = st.cfg->penalty_lambda;
    opts.starts = starts;
    opts.penalty_grid = st.cfg->penalty_grid;
    opts.nm_ftol_rel = 1e-6;  // refits run inside the budget loop; the cap still applies
    opts.seed = derive_seed(st.cfg->seed, salt);
    for (int attempt = 0; attempt < 3; ++attempt) {
        try {
            FitResult fr = fit(in, bounds, opts);
            return std::make_shared<CoKrigeModel>(CoKrigeModel::assemble(in, fr.hyper));
        } catch (const FitError&) {
            opts.seed = derive_seed(opts.seed, 0xBAD0 + static_cast<uint64_t>(attempt));
            if (opts.lambda > 0.0) opts.lambda *= 10.0;
        }
    }
    return nullptr;
}

double min_predictor_over_design(const RunState& st) {
    const int top = static_cast<int>(st.pi.size());
    double z = std::numeric_limits<double>::infinity();
    for (const auto& p : st.design) z = std::min(z, st.model->predict_mean(top, p.x));
    return z;
}

SearchResult searching_stage(const RunState& st, int k) {
    const int top = static_cast<int>(st.pi.size());
    const int budget = st.cfg->ei_search_budget > 0 ? st.cfg->ei_search_budget : 200 * st.prob->dim();
    std::vector<Eigen::VectorXd> existing;
    existing.reserve(st.design.size());
    for (const auto& p : st.design) existing.push_back(p.x);
    return ei_search(*st.model, top, st.z_star, st.prob->domain(), existing, budget,
                     derive_seed(st.cfg->seed, 0xE100u + static_cast<uint64_t>(k)));
}

}  // namespace

int calibrate_r0(const OptimizerConfig& config, const LossProblem& problem, int max_doublings) {
    const int d = problem.dim();
    const int d0 = config.d0_size > 0 ? config.d0_size : std::max(6, 2 * d + 2);
    Eigen::MatrixXd pts = scale_to_box(maximin_lhs(d0, d, derive_seed(config.seed, 0xD0u)),
                                       problem.domain().lower, problem.domain().upper);
    int r0 = config.r0;
    for (int round = 0; round <= max_doublings; ++round, r0 *= 2) {
        if (static_cast<long>(d0) * r0 > config.total_budget) return r0 / 2 > 0 ? r0 / 2 : config.r0;
        std::vector<Eigen::VectorXd> noise(static_cast<size_t>(d0));
        ModelInputs in;
        in.design = pts;
        in.domain = problem.domain();
        in.y.assign(1, Eigen::VectorXd(d0));
        in.point_noise.assign(static_cast<size_t>(d0), Eigen::MatrixXd(1, 1));
        for (int i = 0; i < d0; ++i) {
            RngStream stream(derive_seed(config.seed, 0xCA11u + static_cast<uint64_t>(round)),
                             static_cast<uint64_t>(i));
            auto samples = problem.simulate(pts.row(i).transpose(), r0, stream);
            auto panel = sectioning_panel(samples, {config.levels.front()}, config.n_b);
            in.y[0](i) = panel.point_estimates(0);
            in.point_noise[static_cast<size_t>(i)](0, 0) = panel.noise_cov(0, 0);
        }
        FitOptions fo;
        fo.starts = config.fit_starts;
        fo.seed = derive_seed(config.seed, 0xF1Du);
        FitResult fr = fit(in, HyperBounds::defaults(in.domain, in.y), fo);

        int ok = 0;
        for (int i = 0; i < d0; ++i) {
            ModelInputs loo;
            loo.domain = in.domain;
            loo.design.resize(d0 - 1, d);
            loo.y.assign(1, Eigen::VectorXd(d0 - 1));
            loo.point_noise.assign(static_cast<size_t>(d0 - 1), Eigen::MatrixXd(1, 1));
            int r = 0;
            for (int j = 0; j < d0; ++j) {
                if (j == i) continue;
                loo.design.row(r) = in.design.row(j);
                loo.y[0](r) = in.y[0](j);
                loo.point_noise[static_cast<size_t>(r)] = in.point_noise[static_cast<size_t>(j)];
                ++r;
            }
            try {
                auto model = CoKrigeModel::assemble(loo, fr.hyper);
                auto pred = model.predict(1, pts.row(i).transpose());
                double denom = std::sqrt(pred.var_full + in.point_noise[static_cast<size_t>(i)](0, 0));
                if (denom <= 0.0 || std::abs(in.y[0](i) - pred.mean) < 3.0 * denom) ++ok;
            } catch (const FitError&) {
            }
        }
        if (static_cast<double>(ok) >= 0.95 * d0) return r0;
    }
    return r0 / 2;
}

RunResult run(const OptimizerConfig& config, const LossProblem& problem, const RowCallback& on_row) {
    config.validate(problem.dim());

    RunState st;
    st.cfg = &config;
    st.prob = &problem;
    st.r0 = config.calibrate_r0 ? calibrate_r0(config, problem) : config.r0;

    const int d = problem.dim();
    const int d0 = config.d0_size > 0 ? config.d0_size : std::max(6, 2 * d + 2);
    const int m = st.m();
    if (static_cast<long>(d0) * st.r0 > config.total_budget) st.r0 = config.r0;

    RunResult result;
    result.r0_used = st.r0;

    // Initial design: maximin Latin hypercube, r0 replications each.
    Eigen::MatrixXd pts = scale_to_box(maximin_lhs(d0, d, derive_seed(config.seed, 0xD0u)),
                                       problem.domain().lower, problem.domain().upper);
    for (int i = 0; i < d0; ++i) {
        DesignPoint pt;
        pt.x = pts.row(i).transpose();
        pt.point_index = static_cast<uint64_t>(i);
        st.design.push_back(std::move(pt));
        simulate_at(st, st.design.back(), st.r0);
        refresh_panel(st, st.design.back());
    }

    // Noise tolerance: configured value or the max level-1 noise variance
    // over the initial design.
    if (config.c0 > 0.0) {
        st.c0 = config.c0;
    } else {
        for (const auto& p : st.design) st.c0 = std::max(st.c0, p.panel.noise_cov(0, 0));
    }

    // Initial single-level model on the base level.
    st.pi = {1};
    st.h = 1;
    st.model = fit_model(st, st.pi, config.fit_starts, 0xF000u);
    if (!st.model) throw FitError("initial level-1 model fit failed");
    result.initial_model = st.model;
    result.initial_model_alpha = config.levels.front();
    st.z_star = min_predictor_over_design(st);

    long b_prev = st.r0;
    long lower_level_spend = 0;
    std::vector<int> last_fitted_pi = st.pi;
    int k = 0;

    while (st.remaining() >= st.r0) {
        ++k;
        const long rk = config.rk(k);

        // Searching stage: EI argmax at the current highest level.
        SearchOutcome sel = searching_stage(st, k);

        // Iteration budget: deficits counted with the new point at zero.
        long deficit = rk;  // the new point
        double max_noise_var = 0.0;
        for (const auto& p : st.design) {
            deficit += std::max(0L, rk - p.n());
            max_noise_var = std::max(max_noise_var, p.panel.noise_cov(st.h - 1, st.h - 1));
        }
        long b_k = k == 1 ? std::min<long>(st.r0, st.remaining())
                          : update_budget(b_prev, deficit, max_noise_var, sel.spatial_var,
                                          st.remaining());

        TraceRow row;
        row.k = k;
        row.x_next = sel.x;
        row.exploration_fallback = sel.fallback;
        row.budget_iter = b_k;

        // Spend: r0 at the new point first.
        DesignPoint fresh;
        fresh.x = sel.x;
        fresh.point_index = static_cast<uint64_t>(st.design.size());
        st.design.push_back(std::move(fresh));
        DesignPoint& newpt = st.design.back();
        simulate_at(st, newpt, st.r0);
        refresh_panel(st, newpt);

        const int n_pts = static_cast<int>(st.design.size());
        std::vector<long> alloc(static_cast<size_t>(n_pts), 0);
        alloc[static_cast<size_t>(n_pts - 1)] = st.r0;

        long distributable = b_k - st.r0;
        Eigen::VectorXd deficits(n_pts);
        for (int i = 0; i < n_pts; ++i) {
            deficits(i) = static_cast<double>(std::max(0L, rk - st.design[static_cast<size_t>(i)].n()));
        }
        long total_deficit = static_cast<long>(deficits.sum());
        std::vector<long> extra(static_cast<size_t>(n_pts), 0);
        if (distributable > 0) {
            if (total_deficit > distributable) {
                extra = largest_remainder(deficits, distributable);
                row.deficit_shortfall = true;
            } else {
                for (int i = 0; i < n_pts; ++i) extra[static_cast<size_t>(i)] = static_cast<long>(deficits(i));
                long rest = distributable - total_deficit;
                if (rest > 0) {
                    Eigen::VectorXd est(n_pts), var(n_pts);
                    for (int i = 0; i < n_pts; ++i) {
                        const QuantilePanel& panel = st.design[static_cast<size_t>(i)].panel;
                        est(i) = panel.point_estimates(st.h - 1);
                        var(i) = panel.noise_cov(st.h - 1, st.h - 1);
                    }
                    auto ocba = ocba_allocate(est, var, rest, config.classical_ocba);
                    for (int i = 0; i < n_pts; ++i) extra[static_cast<size_t>(i)] += ocba[static_cast<size_t>(i)];
                }
            }
        }
        for (int i = 0; i < n_pts; ++i) {
            if (extra[static_cast<size_t>(i)] > 0) {
                simulate_at(st, st.design[static_cast<size_t>(i)], extra[static_cast<size_t>(i)]);
                refresh_panel(st, st.design[static_cast<size_t>(i)]);
                alloc[static_cast<size_t>(i)] += extra[static_cast<size_t>(i)];
            }
        }
        row.alloc = alloc;
        row.alloc_total = std::accumulate(alloc.begin(), alloc.end(), 0L);

        // Modeling update: incumbent at the objective level, tolerance, levels.
        int inc = 0;
        for (int i = 1; i < n_pts; ++i) {
            if (st.design[static_cast<size_t>(i)].panel.point_estimates(m - 1) <
                st.design[static_cast<size_t>(inc)].panel.point_estimates(m - 1)) {
                inc = i;
            }
        }
        const DesignPoint& incumbent = st.design[static_cast<size_t>(inc)];
        st.c0 = update_c0(st.c0, incumbent.panel.noise_cov(m - 1, m - 1), incumbent.n(),
                          st.remaining(), n_pts, b_k);

        if (st.h < m) lower_level_spend += row.alloc_total;
        std::vector<Eigen::VectorXd> diags(static_cast<size_t>(n_pts));
        for (int i = 0; i < n_pts; ++i) {
            diags[static_cast<size_t>(i)] = st.design[static_cast<size_t>(i)].panel.noise_cov.diagonal();
        }
        LevelUpdate lu = update_levels(diags, st.c0, st.h);
        if (config.max_lower_level_budget >= 0 && lower_level_spend >= config.max_lower_level_budget) {
            lu = update_levels(diags, st.c0, m);  // effort cap reached: force the objective level
        }
        st.h = lu.h;

        auto refreshed = fit_model(st, lu.pi,
                                   lu.pi == last_fitted_pi ? config.refit_starts : config.fit_starts,
                                   0xF100u + static_cast<uint64_t>(k));
        if (refreshed) {
            st.model = refreshed;
            st.pi = lu.pi;
            last_fitted_pi = lu.pi;
            st.z_star = min_predictor_over_design(st);
        } else {
            row.fit_skipped = true;  // keep the previous model this iteration
        }

        row.h = st.h;
        row.c0 = st.c0;
        for (int lvl : st.pi) row.pi_levels.push_back(config.levels[static_cast<size_t>(lvl - 1)]);
        row.remaining = st.remaining();
        row.xhat = incumbent.x;
        row.yhat = incumbent.panel.point_estimates(m - 1);
        if (on_row) on_row(row);
        result.rows.push_back(row);
        b_prev = b_k;
    }

    int inc = 0;
    for (int i = 1; i < static_cast<int>(st.design.size()); ++i) {
        if (st.design[static_cast<size_t>(i)].panel.point_estimates(m - 1) <
            st.design[static_cast<size_t>(inc)].panel.point_estimates(m - 1)) {
            inc = i;
        }
    }
    result.final_x = st.design[static_cast<size_t>(inc)].x;
    result.final_y = st.design[static_cast<size_t>(inc)].panel.point_estimates(m - 1);
    result.final_model = st.model;
    result.design = std::move(st.design);
    result.total_spent = st.spent;
    result.c0_final = st.c0;
    result.h_final = st.h;
    return result;
}

}  // namespace qml
