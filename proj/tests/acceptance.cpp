// Acceptance suite: end-to-end checks of the estimator asymptotics, model
// reductions, penalized fitting, and the optimizer against its exact
// oracles. Each criterion prints one PASS/FAIL line; the exit code is the
// number of failures. Criteria can be selected by number on the command
// line, e.g. `acceptance 1 2 9`.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qml/bench.hpp"
#include "qml/cokrige.hpp"
#include "qml/lhs.hpp"
#include "qml/math.hpp"
#include "qml/optimizer.hpp"
#include "qml/problems.hpp"
#include "qml/quantile.hpp"
#include "qml/rng.hpp"

using namespace qml;

namespace {

Box make_box(int d, double lo, double hi) {
    Box b;
    b.lower = Eigen::VectorXd::Constant(d, lo);
    b.upper = Eigen::VectorXd::Constant(d, hi);
    return b;
}

// Random smooth test surface: a short trigonometric series.
std::function<double(const Eigen::VectorXd&)> random_surface(uint64_t seed) {
    Pcg rng(seed);
    struct Term {
        Eigen::VectorXd w;
        double a, phase;
    };
    auto terms = std::make_shared<std::vector<Term>>();
    for (int t = 0; t < 4; ++t) {
        Term term;
        term.a = rng.uniform(0.3, 1.2);
        term.phase = rng.uniform(0.0, 6.28);
        term.w = Eigen::VectorXd::Zero(4);
        for (int j = 0; j < 4; ++j) term.w(j) = rng.uniform(1.0, 7.0);
        terms->push_back(term);
    }
    return [terms](const Eigen::VectorXd& x) {
        double acc = 0.0;
        for (const auto& t : *terms) {
            double arg = t.phase;
            for (int j = 0; j < x.size(); ++j) arg += t.w(j) * x(j);
            acc += t.a * std::sin(arg);
        }
        return acc;
    };
}

// ---------------------------------------------------------------------------
// Criterion 1: sectioning estimator asymptotics against the closed forms.
bool criterion1(std::ostream& os) {
    auto v = validate_estimators(500, 10000, 10, 0xACC1u);
    os << "var ratio " << v.var_ratio << " (target 1 +-0.10), cov ratio " << v.cov_ratio
       << " (target 1 +-0.15)";
    return v.var_pass && v.cov_pass;
}

// ---------------------------------------------------------------------------
// Criterion 2: deterministic reduction interpolates; spatial variance is
// zero at design points for 1..3 levels.
bool criterion2(std::ostream& os) {
    double worst_interp = 0.0, worst_svar = 0.0;
    for (int fixture = 0; fixture < 20; ++fixture) {
        const int d = fixture % 2 == 0 ? 1 : 2;
        const int n = 8 + (fixture % 5);
        Box box = make_box(d, 0.0, 1.0);
        Eigen::MatrixXd design =
            scale_to_box(maximin_lhs(n, d, 0xC2000u + static_cast<uint64_t>(fixture)), box.lower, box.upper);
        auto f = random_surface(0xC2100u + static_cast<uint64_t>(fixture));
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) y(i) = f(design.row(i).transpose());

        ModelInputs in;
        in.design = design;
        in.y = {y};
        in.domain = box;
        Hyperparams hp;
        hp.rho.resize(0);
        hp.theta = {Eigen::VectorXd::Constant(d, 0.05)};
        hp.sigma2 = Eigen::VectorXd::Constant(1, 1.0);
        auto model = CoKrigeModel::assemble(in, hp);
        for (int i = 0; i < n; ++i) {
            auto p = model.predict(1, design.row(i).transpose());
            worst_interp = std::max(worst_interp, std::abs(p.mean - y(i)));
            worst_svar = std::max(worst_svar, p.var_spatial);
        }
    }
    // Multi-level spatial variance at design points, with noise present.
    for (int m = 1; m <= 3; ++m) {
        const int n = 9;
        Box box = make_box(1, 0.0, 1.0);
        Eigen::MatrixXd design = scale_to_box(maximin_lhs(n, 1, 0xC2200u + static_cast<uint64_t>(m)),
                                              box.lower, box.upper);
        auto f = random_surface(0xC2300u + static_cast<uint64_t>(m));
        ModelInputs in;
        in.design = design;
        in.domain = box;
        for (int l = 0; l < m; ++l) {
            Eigen::VectorXd y(n);
            for (int i = 0; i < n; ++i) y(i) = f(design.row(i).transpose()) + 0.5 * l;
            in.y.push_back(y);
        }
        in.point_noise.assign(n, Eigen::MatrixXd::Constant(m, m, 0.02) +
                                     0.05 * Eigen::MatrixXd::Identity(m, m));
        Hyperparams hp;
        hp.rho = Eigen::VectorXd::Ones(std::max(m - 1, 0));
        hp.sigma2 = Eigen::VectorXd::Constant(m, 1.0);
        for (int l = 0; l < m; ++l) hp.theta.push_back(Eigen::VectorXd::Constant(1, 0.04 + 0.01 * l));
        auto model = CoKrigeModel::assemble(in, hp);
        for (int i = 0; i < n; ++i) {
            for (int l = 1; l <= m; ++l) {
                worst_svar = std::max(worst_svar, model.predict(l, design.row(i).transpose()).var_spatial);
            }
        }
    }
    os << "max interpolation error " << worst_interp << " (tol 1e-6), max design-point spatial var "
       << worst_svar << " (tol 1e-8)";
    return worst_interp < 1e-6 && worst_svar < 1e-8;
}

// ---------------------------------------------------------------------------
// Criterion 3: likelihood decomposition, exact when noise-free and an
// O(1/n) approximation otherwise.
bool criterion3(std::ostream& os) {
    double worst_exact = 0.0;
    for (int fixture = 0; fixture < 10; ++fixture) {
        const int n = 8;
        Box box = make_box(1, 0.0, 1.0);
        Eigen::MatrixXd design = scale_to_box(maximin_lhs(n, 1, 0xC3000u + static_cast<uint64_t>(fixture)),
                                              box.lower, box.upper);
        auto f = random_surface(0xC3100u + static_cast<uint64_t>(fixture));
        Pcg rng(0xC3200u + static_cast<uint64_t>(fixture));
        ModelInputs in;
        in.design = design;
        in.domain = box;
        for (int l = 0; l < 2; ++l) {
            Eigen::VectorXd y(n);
            for (int i = 0; i < n; ++i) y(i) = f(design.row(i).transpose()) + 0.6 * l + 0.15 * rng.normal();
            in.y.push_back(y);
        }
        Hyperparams hp;
        hp.rho = Eigen::VectorXd::Constant(1, rng.uniform(0.4, 1.4));
        hp.theta = {Eigen::VectorXd::Constant(1, 0.02), Eigen::VectorXd::Constant(1, 0.03)};
        hp.sigma2 = Eigen::VectorXd::Constant(2, 0.9);
        worst_exact = std::max(worst_exact,
                               std::abs(loglik(in, hp) - decomposed_loglik(in, hp).sum()));
    }

    // Noisy case: the gap shrinks as per-point replications grow 10x.
    auto prob = LossProblem::builtin("exp1");
    const std::vector<double> levels = {0.6, 0.95};
    auto gap_at = [&](int reps, uint64_t seed) {
        const int n = 8;
        Eigen::MatrixXd design(n, 1);
        for (int i = 0; i < n; ++i) design(i, 0) = 0.05 + 0.9 * (i + 0.5) / n;
        ModelInputs in;
        in.design = design;
        in.domain = prob.domain();
        in.y.assign(2, Eigen::VectorXd(n));
        in.point_noise.assign(n, Eigen::MatrixXd(2, 2));
        for (int i = 0; i < n; ++i) {
            RngStream s(seed, static_cast<uint64_t>(i));
            auto draws = prob.simulate(design.row(i).transpose(), reps, s);
            auto panel = sectioning_panel(draws, levels, 10);
            in.y[0](i) = panel.point_estimates(0);
            in.y[1](i) = panel.point_estimates(1);
            in.point_noise[static_cast<size_t>(i)] = panel.noise_cov;
        }
        Hyperparams hp;
        hp.rho = Eigen::VectorXd::Constant(1, 1.0);
        hp.theta = {Eigen::VectorXd::Constant(1, 0.02), Eigen::VectorXd::Constant(1, 0.02)};
        hp.sigma2.resize(2);
        hp.sigma2 << 2.0, 1.0;
        return std::abs(loglik(in, hp) - decomposed_loglik(in, hp).sum());
    };
    double small = 0.0, big = 0.0;
    for (int s = 0; s < 12; ++s) {
        small += gap_at(300, 0xC3300u + static_cast<uint64_t>(s));
        big += gap_at(3000, 0xC3300u + static_cast<uint64_t>(s));
    }
    double shrink = small / big;
    os << "max noise-free gap " << worst_exact << " (tol 1e-6), 10x-replication shrink " << shrink
       << "x (need >= 5)";
    return worst_exact < 1e-6 && shrink >= 5.0;
}

// ---------------------------------------------------------------------------
// Criterion 4: fixtures whose unpenalized fit crosses are cured by the
// default penalty in >= 90% of cases, the rest by escalation.
bool criterion4(std::ostream& os) {
    // Two-level fixtures with non-crossing observations (tight alternating
    // gaps over a wiggly base curve) whose unpenalized interpolation rings
    // below zero between design points.
    int found = 0, cured_default = 0, cured_escalated = 0;
    uint64_t candidate_seed = 0;
    while (found < 50 && candidate_seed < 600) {
        uint64_t seed = 0xC40000u + candidate_seed++;
        Pcg rng(seed);
        const int n = 7;
        Box box = make_box(1, 0.0, 1.0);
        Eigen::MatrixXd design = scale_to_box(maximin_lhs(n, 1, seed), box.lower, box.upper);
        Eigen::VectorXd y1(n), y2(n);
        double w = rng.uniform(8.0, 13.0);
        for (int i = 0; i < n; ++i) {
            y1(i) = 2.0 * std::sin(w * design(i, 0));
            double gap = i % 2 == 0 ? rng.uniform(0.3, 0.5) : rng.uniform(0.005, 0.03);
            y2(i) = y1(i) + gap;
        }
        ModelInputs in;
        in.design = design;
        in.domain = box;
        in.y = {y1, y2};
        in.point_noise.assign(n, 1e-4 * Eigen::MatrixXd::Identity(2, 2));
        HyperBounds bounds = HyperBounds::defaults(in.domain, in.y);

        FitOptions mle;
        mle.lambda = 0.0;
        mle.starts = 4;
        mle.seed = seed;
        auto fr_mle = fit(in, bounds, mle);
        if (fr_mle.kappa_audit <= 1e-6) continue;  // only keep crossing fixtures
        ++found;

        FitOptions pen;
        pen.seed = seed;
        auto fr_pen = fit(in, bounds, pen);
        if (fr_pen.kappa_initial <= 1e-6) ++cured_default;
        if (fr_pen.kappa_audit <= 1e-6) ++cured_escalated;
    }
    os << found << " crossing fixtures; default lambda cured " << cured_default
       << " (need >= " << (found * 9 + 9) / 10 << "), after escalation " << cured_escalated;
    return found == 50 && cured_default * 10 >= found * 9 && cured_escalated == found;
}

// ---------------------------------------------------------------------------
// Criterion 5: the first illustrating experiment lands near its optimum.
bool criterion5(std::ostream& os) {
    OptimizerConfig cfg;
    cfg.total_budget = 1000;
    cfg.d0_size = 6;
    cfg.r0 = 50;
    cfg.levels = {0.6, 0.95};
    cfg.seed = 0xC5u;
    auto prob = LossProblem::builtin("exp1");
    MacroOptions mo;
    mo.n_reps = 20;
    auto summary = run_macro(cfg, prob, mo);
    os << "true-selection frequency " << summary.true_selection_freq << " (need >= 0.70)";
    return summary.completed == 20 && summary.true_selection_freq >= 0.70;
}

// ---------------------------------------------------------------------------
// Criterion 6: multi-level beats (or ties) the single-level baseline on the
// second experiment and clears the floor.
bool criterion6(std::ostream& os) {
    auto prob = LossProblem::builtin("exp2");
    OptimizerConfig cfg;
    cfg.total_budget = 1000;
    cfg.d0_size = 6;
    cfg.r0 = 20;
    cfg.levels = {0.6, 0.95};
    cfg.seed = 0xC6u;
    MacroOptions mo;
    mo.n_reps = 20;
    auto qml_summary = run_macro(cfg, prob, mo);

    OptimizerConfig base = cfg;
    base.levels = {0.95};
    auto q_summary = run_macro(base, prob, mo);

    os << "true-selection: multi " << qml_summary.true_selection_freq << ", single "
       << q_summary.true_selection_freq << " (need multi >= single and multi >= 0.60)";
    return qml_summary.true_selection_freq >= q_summary.true_selection_freq &&
           qml_summary.true_selection_freq >= 0.60;
}

// ---------------------------------------------------------------------------
// Criterion 7: the base-level initial model is more accurate than the
// objective-level initial model.
bool criterion7(std::ostream& os) {
    auto prob = LossProblem::builtin("exp2");
    OptimizerConfig cfg;
    cfg.total_budget = 120;  // exactly the initial design: 6 x 20
    cfg.d0_size = 6;
    cfg.r0 = 20;
    cfg.levels = {0.6, 0.95};
    cfg.seed = 0xC7u;
    MacroOptions mo;
    mo.n_reps = 20;
    auto low = run_macro(cfg, prob, mo);

    OptimizerConfig base = cfg;
    base.levels = {0.95};
    auto high = run_macro(base, prob, mo);

    os << "holdout RMSE: level-0.6 model " << low.mean_pred_error << ", level-0.95 model "
       << high.mean_pred_error << " (need strictly lower)";
    return low.completed == 20 && high.completed == 20 &&
           low.mean_pred_error < high.mean_pred_error;
}

// ---------------------------------------------------------------------------
// Criterion 8: reduced-scale comparison on the 2-D lognormal test problems.
bool criterion8(std::ostream& os) {
    const std::vector<std::string> problems = {"ackley_logn", "rastrigin_logn", "levy_logn"};
    int qml_wins = 0;
    std::ostringstream detail;
    for (size_t pi = 0; pi < problems.size(); ++pi) {
        auto prob = LossProblem::builtin(problems[pi], 2);
        OptimizerConfig cfg;
        cfg.total_budget = 100000;
        cfg.d0_size = 6;
        // r0 = 100 keeps floor(0.99 * n_c) a valid batch index at n_b = 10,
        // so the top-level sectioning panels are unbiased from the start.
        cfg.r0 = 100;
        cfg.levels = {0.6, 0.75, 0.9, 0.99};
        cfg.seed = 0xC800u + static_cast<uint64_t>(pi);
        cfg.penalty_grid = 128;
        MacroOptions mo;
        mo.n_reps = 10;
        auto qml_summary = run_macro(cfg, prob, mo);

        OptimizerConfig base = cfg;
        base.levels = {0.99};
        auto q_summary = run_macro(base, prob, mo);

        double qml_s99 = qml_summary.mean_s99 ? *qml_summary.mean_s99
                                              : std::numeric_limits<double>::infinity();
        double q_s99 = q_summary.mean_s99 ? *q_summary.mean_s99
                                          : std::numeric_limits<double>::infinity();
        bool win = qml_s99 < q_s99;
        if (win) ++qml_wins;
        detail << problems[pi] << ": multi " << qml_s99 << " (" << qml_summary.s99_count
               << "/10), single " << q_s99 << " (" << q_summary.s99_count << "/10)"
               << (win ? " WIN; " : "; ");
    }
    os << detail.str() << "wins " << qml_wins << "/3 (need >= 2)";
    return qml_wins >= 2;
}

// ---------------------------------------------------------------------------
// Criterion 9: property checks on fixtures, no simulation cost beyond a
// desk-size run.
bool criterion9(std::ostream& os) {
    std::vector<std::string> failures;

    // EI closed forms.
    if (std::abs(expected_improvement(1.0, 1.0, 1.0) - 0.398942) > 1e-6) failures.push_back("ei");
    if (expected_improvement(0.0, 3.0, 0.0) != 0.0) failures.push_back("ei-zero");
    if (expected_improvement(1.0, 0.0, 0.0) != 1.0) failures.push_back("ei-certain");

    // OCBA ratio rule on a hand-computable fixture.
    {
        Eigen::VectorXd est(3), var(3);
        est << 0.0, 1.0, 2.0;
        var << 1.0, 1.0, 1.0;
        auto alloc = ocba_allocate(est, var, 300, false);
        if (std::abs(alloc[1] - 2 * alloc[2]) > 1 ||
            std::accumulate(alloc.begin(), alloc.end(), 0L) != 300) {
            failures.push_back("ocba");
        }
    }

    // Level-subset rule against brute-force set logic.
    {
        Pcg rng(0xC9u);
        for (int rep = 0; rep < 100; ++rep) {
            const int m = 2 + static_cast<int>(rng.below(4));
            const int n = 1 + static_cast<int>(rng.below(5));
            std::vector<Eigen::VectorXd> diags;
            for (int i = 0; i < n; ++i) {
                Eigen::VectorXd v(m);
                double cur = rng.uniform(0.0, 2.0);
                for (int l = 0; l < m; ++l) {
                    v(l) = cur;
                    cur += rng.uniform(0.0, 1.5);
                }
                diags.push_back(v);
            }
            auto lu = update_levels(diags, 1.0, 1);
            std::vector<std::set<int>> e(static_cast<size_t>(m));
            for (int i = 0; i < n; ++i) {
                int lstar = 0;
                for (int l = m; l >= 1; --l) {
                    if (diags[static_cast<size_t>(i)](l - 1) <= 1.0) {
                        lstar = l;
                        break;
                    }
                }
                for (int l = 1; l <= lstar; ++l) e[static_cast<size_t>(l - 1)].insert(i);
            }
            int h = 1;
            for (int l = m; l >= 1; --l) {
                if (!e[static_cast<size_t>(l - 1)].empty()) {
                    h = l;
                    break;
                }
            }
            std::vector<int> pi;
            for (int j = 1; j <= h; ++j) {
                bool keep = true;
                for (int l = j + 1; l <= h; ++l) {
                    if (e[static_cast<size_t>(l - 1)] == e[static_cast<size_t>(j - 1)]) keep = false;
                }
                if (keep) pi.push_back(j);
            }
            if (lu.h != h || lu.pi != pi) {
                failures.push_back("level-subset");
                break;
            }
        }
    }

    // Budget conservation, determinism and monotone h/c0 on one small run.
    {
        OptimizerConfig cfg;
        cfg.total_budget = 600;
        cfg.d0_size = 6;
        cfg.r0 = 50;
        cfg.levels = {0.6, 0.95};
        cfg.seed = 0xC9C9u;
        cfg.fit_starts = 2;
        cfg.refit_starts = 2;
        cfg.ei_search_budget = 60;
        cfg.penalty_grid = 128;
        auto prob = LossProblem::builtin("exp1");
        auto a = run(cfg, prob);
        auto b = run(cfg, prob);

        long spent = static_cast<long>(a.design.size() - a.rows.size()) * cfg.r0;
        int prev_h = 1;
        double prev_c0 = 0.0;
        for (const auto& row : a.rows) {
            spent += row.alloc_total;
            if (spent + row.remaining != cfg.total_budget) failures.push_back("conservation");
            if (row.h < prev_h) failures.push_back("monotone-h");
            if (row.c0 < prev_c0) failures.push_back("monotone-c0");
            prev_h = row.h;
            prev_c0 = row.c0;
        }
        if (a.rows.size() != b.rows.size() || a.final_x != b.final_x || a.final_y != b.final_y) {
            failures.push_back("determinism");
        }
        for (size_t i = 0; i < a.rows.size(); ++i) {
            if (a.rows[i].alloc != b.rows[i].alloc || a.rows[i].yhat != b.rows[i].yhat) {
                failures.push_back("determinism-rows");
                break;
            }
        }
    }

    if (failures.empty()) {
        os << "ei, ocba, level-subset, conservation, determinism, monotonicity all green";
        return true;
    }
    os << "failed: ";
    for (const auto& f : failures) os << f << ' ';
    return false;
}

struct Criterion {
    int id;
    const char* name;
    std::function<bool(std::ostream&)> fn;
};

}  // namespace

int main(int argc, char** argv) {
    std::vector<Criterion> criteria = {
        {1, "sectioning estimator asymptotics", criterion1},
        {2, "deterministic reduction and spatial variance at design points", criterion2},
        {3, "likelihood decomposition exact/approximate", criterion3},
        {4, "non-crossing penalty cures crossing fits", criterion4},
        {5, "first 1-D experiment reproduces its optimum", criterion5},
        {6, "second 1-D experiment: multi-level vs baseline direction", criterion6},
        {7, "initial-model accuracy direction", criterion7},
        {8, "2-D lognormal problems: budget-to-target comparison", criterion8},
        {9, "property suite on fixtures", criterion9},
    };

    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && selected.find(c.id) == selected.end()) continue;
        auto t0 = std::chrono::steady_clock::now();
        std::ostringstream detail;
        bool ok = false;
        try {
            ok = c.fn(detail);
        } catch (const std::exception& e) {
            detail << "exception: " << e.what();
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %d: %s — %s [%.1fs]\n", ok ? "PASS" : "FAIL", c.id, c.name,
                    detail.str().c_str(), secs);
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    return failures;
}
