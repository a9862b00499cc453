#include "qml/cokrige.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "qml/lhs.hpp"
#include "qml/nelder_mead.hpp"
#include "qml/rng.hpp"

namespace qml {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kAuditTol = 1e-6;

// Product of rho_k over 1-based levels i..j; the empty product (j < i) is 1.
double pprod(const Eigen::VectorXd& rho, int i, int j) {
    double p = 1.0;
    for (int k = i; k <= j; ++k) p *= rho(k - 1);
    return p;
}

double sample_var(const Eigen::VectorXd& v) {
    if (v.size() < 2) return 0.0;
    double mu = v.mean();
    return (v.array() - mu).square().sum() / static_cast<double>(v.size() - 1);
}

// Gaussian correlation matrix of the design under sensitivities theta.
Eigen::MatrixXd corr_matrix(const Eigen::MatrixXd& design, const Eigen::VectorXd& theta) {
    const int n = static_cast<int>(design.rows());
    Eigen::MatrixXd scaled = design;
    for (int j = 0; j < design.cols(); ++j) scaled.col(j) /= std::sqrt(theta(j));
    Eigen::VectorXd sq = scaled.rowwise().squaredNorm();
    Eigen::MatrixXd d2 = sq.replicate(1, n) + sq.transpose().replicate(n, 1) -
                         2.0 * scaled * scaled.transpose();
    return (-d2.array().max(0.0)).exp().matrix();
}

// Cross-correlation between arbitrary points (rows) and the design.
Eigen::MatrixXd corr_cross(const Eigen::MatrixXd& pts, const Eigen::MatrixXd& design,
                           const Eigen::VectorXd& theta) {
    Eigen::MatrixXd ps = pts, ds = design;
    for (int j = 0; j < design.cols(); ++j) {
        double s = std::sqrt(theta(j));
        ps.col(j) /= s;
        ds.col(j) /= s;
    }
    Eigen::VectorXd psq = ps.rowwise().squaredNorm();
    Eigen::VectorXd dsq = ds.rowwise().squaredNorm();
    Eigen::MatrixXd d2 = psq.replicate(1, design.rows()) +
                         dsq.transpose().replicate(pts.rows(), 1) - 2.0 * ps * ds.transpose();
    return (-d2.array().max(0.0)).exp().matrix();
}

// SPD factorization with an escalating diagonal jitter ladder. Plain
// factorization is tried first so clean matrices stay exact.
std::pair<Eigen::LLT<Eigen::MatrixXd>, double> factor_spd(const Eigen::MatrixXd& mat) {
    const double scale = std::max(mat.diagonal().mean(), 1e-12);
    static constexpr double kLadder[] = {0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4};
    for (double lvl : kLadder) {
        Eigen::MatrixXd m = mat;
        if (lvl > 0.0) m.diagonal().array() += lvl * scale;
        Eigen::LLT<Eigen::MatrixXd> llt(m);
        if (llt.info() == Eigen::Success) return {llt, lvl * scale};
    }
    throw FitError("covariance matrix not positive definite after jitter escalation");
}

double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

// One term of the decomposed likelihood: the level-j autoregressive
// residual under its own kernel, GLS constant trend, with the first-order
// noise correction N_j + rho^2 N_{j-1} - 2 rho N_{j-1,j}.
double decomposed_term(const ModelInputs& in, int j, double rho, const Eigen::VectorXd& theta,
                       double sigma2) {
    const int n = in.points();
    Eigen::VectorXd r = in.y[static_cast<size_t>(j - 1)];
    if (j >= 2) r -= rho * in.y[static_cast<size_t>(j - 2)];
    Eigen::MatrixXd c = sigma2 * corr_matrix(in.design, theta);
    if (!in.point_noise.empty()) {
        for (int i = 0; i < n; ++i) {
            const Eigen::MatrixXd& nc = in.point_noise[static_cast<size_t>(i)];
            double add = nc(j - 1, j - 1);
            if (j >= 2) add += rho * rho * nc(j - 2, j - 2) - 2.0 * rho * nc(j - 2, j - 1);
            c(i, i) += std::max(add, 0.0);
        }
    }
    try {
        auto [llt, jit] = factor_spd(c);
        Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
        Eigen::VectorXd cinv_ones = llt.solve(ones);
        double beta = ones.dot(llt.solve(r)) / ones.dot(cinv_ones);
        Eigen::VectorXd resid = r - beta * ones;
        return -0.5 * log_det(llt) - 0.5 * resid.dot(llt.solve(resid));
    } catch (const FitError&) {
        return -kInf;
    }
}

// Parameter vector layout for the full fit:
// [rho (m-1), log theta (m*d), log sigma2 (m)].
struct ParamSpace {
    int m = 0, d = 0;
    Eigen::VectorXd lo, hi;

    int size() const { return (m - 1) + m * d + m; }

    static ParamSpace from_bounds(int m, int d, const HyperBounds& b) {
        ParamSpace ps;
        ps.m = m;
        ps.d = d;
        ps.lo.resize(ps.size());
        ps.hi.resize(ps.size());
        int idx = 0;
        for (int l = 0; l + 1 < m; ++l, ++idx) {
            ps.lo(idx) = b.rho_lo;
            ps.hi(idx) = b.rho_hi;
        }
        for (int l = 0; l < m; ++l) {
            for (int j = 0; j < d; ++j, ++idx) {
                ps.lo(idx) = std::log(b.theta_lo(j));
                ps.hi(idx) = std::log(b.theta_hi(j));
            }
        }
        for (int l = 0; l < m; ++l, ++idx) {
            ps.lo(idx) = std::log(b.sigma2_lo(l));
            ps.hi(idx) = std::log(b.sigma2_hi(l));
        }
        return ps;
    }

    Eigen::VectorXd pack(const Hyperparams& hp) const {
        Eigen::VectorXd p(size());
        int idx = 0;
        for (int l = 0; l + 1 < m; ++l, ++idx) p(idx) = hp.rho(l);
        for (int l = 0; l < m; ++l) {
            for (int j = 0; j < d; ++j, ++idx) p(idx) = std::log(hp.theta[static_cast<size_t>(l)](j));
        }
        for (int l = 0; l < m; ++l, ++idx) p(idx) = std::log(hp.sigma2(l));
        return clamp(p);
    }

    Hyperparams unpack(const Eigen::VectorXd& p) const {
        Hyperparams hp;
        hp.rho.resize(m - 1);
        hp.theta.resize(static_cast<size_t>(m));
        hp.sigma2.resize(m);
        int idx = 0;
        for (int l = 0; l + 1 < m; ++l, ++idx) hp.rho(l) = p(idx);
        for (int l = 0; l < m; ++l) {
            hp.theta[static_cast<size_t>(l)].resize(d);
            for (int j = 0; j < d; ++j, ++idx) hp.theta[static_cast<size_t>(l)](j) = std::exp(p(idx));
        }
        for (int l = 0; l < m; ++l, ++idx) hp.sigma2(l) = std::exp(p(idx));
        return hp;
    }

    Eigen::VectorXd clamp(Eigen::VectorXd p) const {
        for (int i = 0; i < p.size(); ++i) p(i) = std::clamp(p(i), lo(i), hi(i));
        return p;
    }
};

}  // namespace

Eigen::VectorXd ModelInputs::stacked_y() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(levels()) * points());
    for (int l = 0; l < levels(); ++l) out.segment(static_cast<Eigen::Index>(l) * points(), points()) = y[static_cast<size_t>(l)];
    return out;
}

void ModelInputs::validate() const {
    if (y.empty()) throw std::invalid_argument("ModelInputs: need at least one level");
    if (design.rows() < 1) throw std::invalid_argument("ModelInputs: empty design");
    for (const auto& v : y) {
        if (v.size() != design.rows()) throw std::invalid_argument("ModelInputs: estimate/design size mismatch");
    }
    if (!point_noise.empty()) {
        if (static_cast<int>(point_noise.size()) != points()) {
            throw std::invalid_argument("ModelInputs: one noise block per design point required");
        }
        for (const auto& nc : point_noise) {
            if (nc.rows() != levels() || nc.cols() != levels()) {
                throw std::invalid_argument("ModelInputs: noise block must be levels x levels");
            }
        }
    }
    if (domain.dim() != dim()) throw std::invalid_argument("ModelInputs: domain/design dimension mismatch");
}

HyperBounds HyperBounds::defaults(const Box& domain, const std::vector<Eigen::VectorXd>& y) {
    HyperBounds b;
    const int d = domain.dim();
    b.theta_lo.resize(d);
    b.theta_hi.resize(d);
    for (int j = 0; j < d; ++j) {
        double len2 = domain.width(j) * domain.width(j);
        b.theta_lo(j) = 1e-3 * len2;
        b.theta_hi(j) = 1e3 * len2;
    }
    const int m = static_cast<int>(y.size());
    b.sigma2_lo.resize(m);
    b.sigma2_hi.resize(m);
    for (int l = 0; l < m; ++l) {
        double v = sample_var(y[static_cast<size_t>(l)]);
        if (v < 1e-12) v = 1.0;
        b.sigma2_lo(l) = 1e-6 * v;
        b.sigma2_hi(l) = 1e2 * v;
    }
    return b;
}

CoKrigeModel CoKrigeModel::assemble(const ModelInputs& inputs, const Hyperparams& hyper) {
    inputs.validate();
    const int m = inputs.levels();
    const int n = inputs.points();
    if (hyper.levels() != m || static_cast<int>(hyper.theta.size()) != m ||
        (m > 1 && hyper.rho.size() != m - 1)) {
        throw std::invalid_argument("assemble: hyperparameter shape mismatch");
    }
    for (int l = 0; l < m; ++l) {
        if (!(hyper.sigma2(l) > 0.0)) throw std::invalid_argument("assemble: sigma2 must be positive");
        if ((hyper.theta[static_cast<size_t>(l)].array() <= 0.0).any()) {
            throw std::invalid_argument("assemble: theta must be positive");
        }
    }

    CoKrigeModel model;
    model.inputs_ = inputs;
    model.hyper_ = hyper;
    if (model.hyper_.rho.size() != m - 1) model.hyper_.rho.resize(std::max(m - 1, 0));

    model.corr_.resize(static_cast<size_t>(m));
    for (int l = 0; l < m; ++l) {
        model.corr_[static_cast<size_t>(l)] = corr_matrix(inputs.design, hyper.theta[static_cast<size_t>(l)]);
    }

    const Eigen::Index nn = static_cast<Eigen::Index>(m) * n;
    Eigen::MatrixXd rz = Eigen::MatrixXd::Zero(nn, nn);
    const Eigen::VectorXd& rho = model.hyper_.rho;
    for (int k = 1; k <= m; ++k) {
        for (int s = 1; s <= k; ++s) {
            Eigen::MatrixXd block = Eigen::MatrixXd::Zero(n, n);
            for (int j = 1; j <= s; ++j) {
                block += hyper.sigma2(j - 1) * pprod(rho, j, k - 1) * pprod(rho, j, s - 1) *
                         model.corr_[static_cast<size_t>(j - 1)];
            }
            rz.block((k - 1) * n, (s - 1) * n, n, n) = block;
            if (s != k) rz.block((s - 1) * n, (k - 1) * n, n, n) = block.transpose();
        }
    }

    Eigen::MatrixXd r = rz;
    if (!inputs.point_noise.empty()) {
        for (int k = 0; k < m; ++k) {
            for (int s = 0; s < m; ++s) {
                for (int i = 0; i < n; ++i) {
                    r(static_cast<Eigen::Index>(k) * n + i, static_cast<Eigen::Index>(s) * n + i) +=
                        inputs.point_noise[static_cast<size_t>(i)](k, s);
                }
            }
        }
    }

    model.h_matrix_ = Eigen::MatrixXd::Zero(nn, m);
    for (int k = 1; k <= m; ++k) {
        for (int s = 1; s <= k; ++s) {
            model.h_matrix_.block((k - 1) * n, s - 1, n, 1).setConstant(pprod(rho, s, k - 1));
        }
    }

    std::tie(model.llt_r_, model.jitter_r_) = factor_spd(r);
    std::tie(model.llt_rz_, model.jitter_rz_) = factor_spd(rz);
    model.r_ = r;
    model.rz_ = rz;
    if (model.jitter_r_ > 0.0) model.r_.diagonal().array() += model.jitter_r_;
    if (model.jitter_rz_ > 0.0) model.rz_.diagonal().array() += model.jitter_rz_;

    model.rinv_h_ = model.llt_r_.solve(model.h_matrix_);
    Eigen::MatrixXd gram = model.h_matrix_.transpose() * model.rinv_h_;
    std::tie(model.llt_m_, std::ignore) = factor_spd(gram);

    Eigen::VectorXd ys = inputs.stacked_y();
    model.beta_ = model.llt_m_.solve(model.rinv_h_.transpose() * ys);
    Eigen::VectorXd resid = ys - model.h_matrix_ * model.beta_;
    model.w_ = model.llt_r_.solve(resid);
    model.loglik_ = -0.5 * log_det(model.llt_r_) - 0.5 * resid.dot(model.w_);

    model.rzinv_h_ = model.llt_rz_.solve(model.h_matrix_);
    Eigen::MatrixXd gram_z = model.h_matrix_.transpose() * model.rzinv_h_;
    std::tie(model.llt_mz_, std::ignore) = factor_spd(gram_z);
    return model;
}

std::vector<Eigen::VectorXd> CoKrigeModel::corr_vectors(const Eigen::VectorXd& x) const {
    const int m = levels();
    std::vector<Eigen::VectorXd> a(static_cast<size_t>(m));
    for (int l = 0; l < m; ++l) {
        a[static_cast<size_t>(l)] =
            corr_cross(x.transpose(), inputs_.design, hyper_.theta[static_cast<size_t>(l)]).row(0);
    }
    return a;
}

Eigen::VectorXd CoKrigeModel::stacked_t(int level, const std::vector<Eigen::VectorXd>& a) const {
    const int m = levels();
    const int n = inputs_.points();
    Eigen::VectorXd t = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m) * n);
    for (int s = 1; s <= m; ++s) {
        Eigen::VectorXd seg = Eigen::VectorXd::Zero(n);
        const int q = std::min(s, level);
        for (int j = 1; j <= q; ++j) {
            seg += hyper_.sigma2(j - 1) * pprod(hyper_.rho, j, s - 1) * pprod(hyper_.rho, j, level - 1) *
                   a[static_cast<size_t>(j - 1)];
        }
        t.segment(static_cast<Eigen::Index>(s - 1) * n, n) = seg;
    }
    return t;
}

Eigen::VectorXd CoKrigeModel::trend_h(int level) const {
    Eigen::VectorXd h = Eigen::VectorXd::Zero(levels());
    for (int s = 1; s <= level; ++s) h(s - 1) = pprod(hyper_.rho, s, level - 1);
    return h;
}

double CoKrigeModel::prior_var(int level) const {
    double v = 0.0;
    for (int j = 1; j <= level; ++j) {
        double p = pprod(hyper_.rho, j, level - 1);
        v += hyper_.sigma2(j - 1) * p * p;
    }
    return v;
}

CoKrigeModel::Prediction CoKrigeModel::predict(int level, const Eigen::VectorXd& x) const {
    if (level < 1 || level > levels()) throw std::invalid_argument("predict: level out of range");
    auto a = corr_vectors(x);
    Eigen::VectorXd t = stacked_t(level, a);
    Eigen::VectorXd h = trend_h(level);

    Prediction out{};
    out.mean = h.dot(beta_) + t.dot(w_);
    const double prior = prior_var(level);

    Eigen::VectorXd zeta = h - rinv_h_.transpose() * t;
    out.var_full = prior - t.dot(llt_r_.solve(t)) + zeta.dot(llt_m_.solve(zeta));
    Eigen::VectorXd zeta_z = h - rzinv_h_.transpose() * t;
    out.var_spatial = prior - t.dot(llt_rz_.solve(t)) + zeta_z.dot(llt_mz_.solve(zeta_z));

    out.var_full = std::max(out.var_full, 0.0);
    out.var_spatial = std::max(out.var_spatial, 0.0);
    return out;
}

double CoKrigeModel::predict_mean(int level, const Eigen::VectorXd& x) const {
    if (level < 1 || level > levels()) throw std::invalid_argument("predict_mean: level out of range");
    auto a = corr_vectors(x);
    return trend_h(level).dot(beta_) + stacked_t(level, a).dot(w_);
}

Eigen::MatrixXd CoKrigeModel::predict_means(const Eigen::MatrixXd& points) const {
    const int m = levels();
    const int n = inputs_.points();
    const int g = static_cast<int>(points.rows());

    // v[j][s] = corr_j(points, D) * w_s; t-block coefficients then combine
    // them per output level without per-point solves.
    std::vector<Eigen::MatrixXd> cross(static_cast<size_t>(m));
    for (int j = 0; j < m; ++j) {
        cross[static_cast<size_t>(j)] = corr_cross(points, inputs_.design, hyper_.theta[static_cast<size_t>(j)]);
    }
    std::vector<std::vector<Eigen::VectorXd>> v(static_cast<size_t>(m),
                                                std::vector<Eigen::VectorXd>(static_cast<size_t>(m)));
    for (int s = 0; s < m; ++s) {
        Eigen::VectorXd ws = w_.segment(static_cast<Eigen::Index>(s) * n, n);
        for (int j = 0; j <= s; ++j) v[static_cast<size_t>(j)][static_cast<size_t>(s)] = cross[static_cast<size_t>(j)] * ws;
    }

    Eigen::MatrixXd out(g, m);
    for (int l = 1; l <= m; ++l) {
        Eigen::VectorXd acc = Eigen::VectorXd::Constant(g, trend_h(l).dot(beta_));
        for (int s = 1; s <= m; ++s) {
            const int q = std::min(s, l);
            for (int j = 1; j <= q; ++j) {
                double coef = hyper_.sigma2(j - 1) * pprod(hyper_.rho, j, s - 1) * pprod(hyper_.rho, j, l - 1);
                acc += coef * v[static_cast<size_t>(j - 1)][static_cast<size_t>(s - 1)];
            }
        }
        out.col(l - 1) = acc;
    }
    return out;
}

nlohmann::json CoKrigeModel::to_json() const {
    nlohmann::json j;
    j["schema"] = "cokrige-model-v1";
    j["levels"] = levels();
    j["dim"] = inputs_.dim();
    j["rho"] = std::vector<double>(hyper_.rho.begin(), hyper_.rho.end());
    nlohmann::json thetas = nlohmann::json::array();
    for (const auto& th : hyper_.theta) thetas.push_back(std::vector<double>(th.begin(), th.end()));
    j["theta"] = thetas;
    j["sigma2"] = std::vector<double>(hyper_.sigma2.begin(), hyper_.sigma2.end());
    j["beta"] = std::vector<double>(beta_.begin(), beta_.end());
    nlohmann::json design = nlohmann::json::array();
    for (int i = 0; i < inputs_.points(); ++i) {
        design.push_back(std::vector<double>(inputs_.design.row(i).begin(), inputs_.design.row(i).end()));
    }
    j["design"] = design;
    nlohmann::json est = nlohmann::json::array();
    for (const auto& yl : inputs_.y) est.push_back(std::vector<double>(yl.begin(), yl.end()));
    j["estimates"] = est;
    j["loglik"] = loglik_;
    j["jitter_r"] = jitter_r_;
    j["jitter_rz"] = jitter_rz_;
    return j;
}

double loglik(const ModelInputs& inputs, const Hyperparams& hyper) {
    try {
        return CoKrigeModel::assemble(inputs, hyper).loglik();
    } catch (const FitError&) {
        return -kInf;
    }
}

Eigen::VectorXd decomposed_loglik(const ModelInputs& inputs, const Hyperparams& hyper) {
    inputs.validate();
    const int m = inputs.levels();
    Eigen::VectorXd terms(m);
    for (int j = 1; j <= m; ++j) {
        double rho = j >= 2 ? hyper.rho(j - 2) : 0.0;
        terms(j - 1) = decomposed_term(inputs, j, rho, hyper.theta[static_cast<size_t>(j - 1)],
                                       hyper.sigma2(j - 1));
    }
    return terms;
}

CrossingReport crossing_penalty(const CoKrigeModel& model, int grid_points, uint64_t seed) {
    CrossingReport rep;
    const int m = model.levels();
    if (m < 2) {
        rep.phi = kInf;
        rep.kappa = 0.0;
        return rep;
    }
    const Box& box = model.inputs().domain;
    Eigen::MatrixXd grid =
        scale_to_box(latin_hypercube(grid_points, box.dim(), seed), box.lower, box.upper);
    Eigen::MatrixXd means = model.predict_means(grid);
    Eigen::VectorXd gaps(grid_points);
    for (int i = 0; i < grid_points; ++i) {
        double gmin = kInf;
        for (int l = 0; l + 1 < m; ++l) gmin = std::min(gmin, means(i, l + 1) - means(i, l));
        gaps(i) = gmin;
    }

    double phi = gaps.minCoeff();
    auto gap_at = [&](const Eigen::VectorXd& x) {
        Eigen::MatrixXd mm = model.predict_means(x.transpose());
        double gmin = kInf;
        for (int l = 0; l + 1 < m; ++l) gmin = std::min(gmin, mm(0, l + 1) - mm(0, l));
        return gmin;
    };

    // Local polish from the 5 tightest grid points.
    std::vector<int> idx(static_cast<size_t>(grid_points));
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + std::min<ptrdiff_t>(5, grid_points), idx.end(),
                      [&](int a, int b) { return gaps(a) < gaps(b); });
    NelderMeadOptions nm;
    nm.max_evals = 100;
    nm.init_step_frac = 0.05;
    for (int s = 0; s < std::min(5, grid_points); ++s) {
        auto res = nelder_mead_minimize(gap_at, grid.row(idx[static_cast<size_t>(s)]).transpose(),
                                        box.lower, box.upper, nm);
        phi = std::min(phi, res.f);
    }
    rep.phi = phi;
    rep.kappa = phi < 0.0 ? -phi : 0.0;
    return rep;
}

FitResult fit(const ModelInputs& inputs, const HyperBounds& bounds, const FitOptions& options) {
    inputs.validate();
    if (inputs.points() < 2) throw std::invalid_argument("fit: need at least 2 design points");
    const int m = inputs.levels();
    const int d = inputs.dim();
    ParamSpace ps = ParamSpace::from_bounds(m, d, bounds);

    // Stage 1: per-level decomposed warm start.
    Hyperparams warm;
    warm.rho = Eigen::VectorXd::Zero(std::max(m - 1, 0));
    warm.theta.resize(static_cast<size_t>(m));
    warm.sigma2.resize(m);
    Eigen::VectorXd len2(d);
    for (int j = 0; j < d; ++j) len2(j) = inputs.domain.width(j) * inputs.domain.width(j);

    for (int j = 1; j <= m; ++j) {
        double rho0 = 0.0;
        Eigen::VectorXd resid = inputs.y[static_cast<size_t>(j - 1)];
        if (j >= 2) {
            const Eigen::VectorXd& ylo = inputs.y[static_cast<size_t>(j - 2)];
            double vlo = sample_var(ylo);
            if (vlo > 1e-12) {
                double cov = ((ylo.array() - ylo.mean()) * (resid.array() - resid.mean())).sum() /
                             static_cast<double>(inputs.points() - 1);
                rho0 = std::clamp(cov / vlo, bounds.rho_lo, bounds.rho_hi);
            }
            resid -= rho0 * ylo;
        }
        double s20 = std::clamp(std::max(sample_var(resid), 1e-8), bounds.sigma2_lo(j - 1),
                                bounds.sigma2_hi(j - 1));

        const int np = d + 1 + (j >= 2 ? 1 : 0);
        Eigen::VectorXd plo(np), phi_up(np);
        int off = 0;
        if (j >= 2) {
            plo(0) = bounds.rho_lo;
            phi_up(0) = bounds.rho_hi;
            off = 1;
        }
        for (int t = 0; t < d; ++t) {
            plo(off + t) = std::log(bounds.theta_lo(t));
            phi_up(off + t) = std::log(bounds.theta_hi(t));
        }
        plo(off + d) = std::log(bounds.sigma2_lo(j - 1));
        phi_up(off + d) = std::log(bounds.sigma2_hi(j - 1));

        auto term_obj = [&](const Eigen::VectorXd& p) {
            double rho = j >= 2 ? p(0) : 0.0;
            Eigen::VectorXd th(d);
            for (int t = 0; t < d; ++t) th(t) = std::exp(p(off + t));
            return -decomposed_term(inputs, j, rho, th, std::exp(p(off + d)));
        };

        NelderMeadOptions nm;
        nm.max_evals = 120 * np;
        nm.ftol_rel = 1e-8;
        double best_f = kInf;
        Eigen::VectorXd best_p;
        for (double frac : {0.25, 0.02}) {
            Eigen::VectorXd p0(np);
            if (j >= 2) p0(0) = rho0;
            for (int t = 0; t < d; ++t) {
                p0(off + t) = std::clamp(std::log(frac * len2(t)), plo(off + t), phi_up(off + t));
            }
            p0(off + d) = std::log(s20);
            auto res = nelder_mead_minimize(term_obj, p0, plo, phi_up, nm);
            if (res.f < best_f) {
                best_f = res.f;
                best_p = res.x;
            }
        }
        if (j >= 2) warm.rho(j - 2) = best_p(0);
        warm.theta[static_cast<size_t>(j - 1)].resize(d);
        for (int t = 0; t < d; ++t) warm.theta[static_cast<size_t>(j - 1)](t) = std::exp(best_p(off + t));
        warm.sigma2(j - 1) = std::exp(best_p(off + d));
    }

    // Stage 2: full penalized likelihood from the warm start.
    double ll_warm = loglik(inputs, warm);
    double lambda = options.lambda >= 0.0
                        ? options.lambda
                        : 1e3 * (1.0 + (std::isfinite(ll_warm) ? std::abs(ll_warm) : 0.0));
    const uint64_t pen_seed = derive_seed(options.seed, 0x9e24u);

    auto penalized = [&](const Eigen::VectorXd& p, double lam) {
        Hyperparams hp = ps.unpack(ps.clamp(p));
        try {
            CoKrigeModel model = CoKrigeModel::assemble(inputs, hp);
            double q = -model.loglik();
            if (m >= 2 && lam > 0.0) {
                q += lam * crossing_penalty(model, options.penalty_grid, pen_seed).kappa;
            }
            return q;
        } catch (const FitError&) {
            return 1e300;
        }
    };

    NelderMeadOptions nm;
    nm.max_evals = options.max_iter_per_param * ps.size();
    nm.ftol_rel = options.nm_ftol_rel;

    Eigen::VectorXd warm_p = ps.pack(warm);
    auto multistart = [&](double lam, const std::vector<Eigen::VectorXd>& extra_starts) {
        double best_q = kInf;
        Eigen::VectorXd best_p;
        int start_idx = 0;
        auto run_start = [&](const Eigen::VectorXd& p0) {
            auto res = nelder_mead_minimize([&](const Eigen::VectorXd& p) { return penalized(p, lam); },
                                            ps.clamp(p0), ps.lo, ps.hi, nm);
            if (res.f < best_q) {
                best_q = res.f;
                best_p = res.x;
            }
            ++start_idx;
        };
        for (const auto& p0 : extra_starts) {
            if (start_idx >= options.starts) break;
            run_start(p0);
        }
        Pcg rng(derive_seed(options.seed, 0x517au + static_cast<uint64_t>(std::llround(std::log10(lam + 1.0)))));
        while (start_idx < options.starts) {
            Eigen::VectorXd p0 = warm_p;
            for (int i = 0; i < p0.size(); ++i) {
                if (i < m - 1) {
                    p0(i) += rng.uniform(-0.5, 0.5);
                } else {
                    p0(i) += rng.uniform(-1.15, 1.15);
                }
            }
            run_start(p0);
        }
        if (!std::isfinite(best_q) || best_q >= 1e300) {
            throw FitError("fit: every start failed positive-definite assembly");
        }
        return std::pair{best_p, best_q};
    };

    auto [best_p, best_q] = multistart(lambda, {warm_p});

    FitResult result;
    result.lambda_used = lambda;
    auto audit = [&](const Eigen::VectorXd& p) {
        CoKrigeModel model = CoKrigeModel::assemble(inputs, ps.unpack(ps.clamp(p)));
        double kappa = m >= 2 ? crossing_penalty(model, options.audit_grid).kappa : 0.0;
        return std::pair{model.loglik(), kappa};
    };
    auto [ll0, kappa0] = audit(best_p);
    result.kappa_initial = kappa0;
    result.loglik = ll0;
    result.kappa_audit = kappa0;

    while (lambda > 0.0 && result.kappa_audit > kAuditTol &&
           result.escalations < options.lambda_escalations) {
        lambda *= 10.0;
        ++result.escalations;
        std::tie(best_p, best_q) = multistart(lambda, {best_p, warm_p});
        auto [ll, kappa] = audit(best_p);
        result.loglik = ll;
        result.kappa_audit = kappa;
        result.lambda_used = lambda;
    }
    result.crossing_flagged = result.kappa_audit > kAuditTol;
    result.hyper = ps.unpack(ps.clamp(best_p));
    return result;
}

}  // namespace qml
