#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "fedgmm/errors.hpp"
#include "fedgmm/math.hpp"

// The hypothesis class: a shared bank of Gaussian input components, a shared
// bank of multinomial-logistic learners, and a per-client weight grid over
// the M1 x M2 product. One (E, M) cycle on a client's data is expressed as
// e_step + m_step_pi / m_step_gaussian / m_step_learner; prediction and
// likelihood scoring evaluate the same mixture in log domain.

namespace fedgmm {

enum class Mode {
    full,              // weight * gaussian * learner
    unsupervised,      // weight * gaussian (labels ignored, no learners)
    conditional_only,  // weight * learner (gaussian factor dropped; frozen)
};

enum class CovMode { free_cov, fixed_identity };

inline Mode mode_from_string(const std::string& s) {
    if (s == "full") return Mode::full;
    if (s == "unsupervised") return Mode::unsupervised;
    if (s == "conditional-only") return Mode::conditional_only;
    throw config_error("unknown mode '" + s + "' (expected full|unsupervised|conditional-only)");
}

inline std::string mode_to_string(Mode m) {
    switch (m) {
        case Mode::full: return "full";
        case Mode::unsupervised: return "unsupervised";
        case Mode::conditional_only: return "conditional-only";
    }
    return "full";
}

inline CovMode cov_from_string(const std::string& s) {
    if (s == "free") return CovMode::free_cov;
    if (s == "fixed-identity") return CovMode::fixed_identity;
    throw config_error("unknown covariance mode '" + s + "' (expected free|fixed-identity)");
}

inline std::string cov_to_string(CovMode c) {
    return c == CovMode::free_cov ? "free" : "fixed-identity";
}

struct GaussianComponent {
    Vector mu;
    Matrix sigma;
};

// Multinomial logistic regression: logits = W x + b, W is K x d.
struct LearnerParams {
    Matrix W;
    Vector b;
    int num_classes() const { return static_cast<int>(b.size()); }
};

// Personalized mixture weights over the M1 x M2 grid, kept in log domain.
struct MixtureWeights {
    Matrix log_pi;  // M1 x M2

    int m1() const { return static_cast<int>(log_pi.rows()); }
    int m2() const { return static_cast<int>(log_pi.cols()); }

    static MixtureWeights uniform(int m1, int m2) {
        MixtureWeights w;
        w.log_pi = Matrix::Constant(m1, m2, -std::log(static_cast<double>(m1) * m2));
        return w;
    }

    static MixtureWeights from_linear(const Matrix& pi) {
        MixtureWeights w;
        w.log_pi = pi.array().max(0.0).log().matrix();
        const double z = log_sum_exp(Eigen::Map<const Vector>(w.log_pi.data(), w.log_pi.size()));
        w.log_pi.array() -= z;
        return w;
    }

    Matrix linear() const { return exp_exact(log_pi); }

    // Log of the row sums (weight mass per Gaussian component). A row with no
    // mass anywhere is a valid grid state and reduces to -inf.
    Vector log_row_mass() const {
        Vector out(log_pi.rows());
        for (Eigen::Index i = 0; i < log_pi.rows(); ++i)
            out[i] = log_pi.row(i).maxCoeff() == kNegInf
                         ? kNegInf
                         : log_sum_exp(log_pi.row(i).transpose());
        return out;
    }

    // Log of the column sums (weight mass per learner).
    Vector log_col_mass() const {
        Vector out(log_pi.cols());
        for (Eigen::Index j = 0; j < log_pi.cols(); ++j)
            out[j] = log_pi.col(j).maxCoeff() == kNegInf ? kNegInf : log_sum_exp(log_pi.col(j));
        return out;
    }
};

// Per-sample posterior over the grid, log domain. Cell (m1, m2) lives in
// column m1 * M2 + m2; every row log-sum-exps to 0.
struct ResponsibilityBlock {
    Matrix log_q;  // n x (M1*M2)
    int M1 = 0;
    int M2 = 0;

    int n() const { return static_cast<int>(log_q.rows()); }
    double log_cell(int i, int m1, int m2) const { return log_q(i, m1 * M2 + m2); }
};

struct LabeledDataset {
    Matrix xs;            // n x d
    std::vector<int> ys;  // n, values in [0, K)
    int client_id = -1;

    int n() const { return static_cast<int>(xs.rows()); }
    int dim() const { return static_cast<int>(xs.cols()); }
};

// ---------------------------------------------------------------------------
// Learners

// Log-softmax of W x + b for each row of xs; returns n x K.
inline Matrix learner_log_probs(const LearnerParams& theta, const Matrix& xs) {
    Matrix logits = xs * theta.W.transpose();
    logits.rowwise() += theta.b.transpose();
    Vector z = rowwise_log_sum_exp(logits);
    logits.colwise() -= z;
    return logits;
}

inline double learner_log_conditional(const LearnerParams& theta, const Vector& x, int y) {
    if (y < 0 || y >= theta.num_classes())
        throw std::invalid_argument("learner_log_conditional: label out of range");
    if (theta.W.cols() != x.size())
        throw std::invalid_argument("learner_log_conditional: dimension mismatch");
    Vector logits = theta.W * x + theta.b;
    return logits[y] - log_sum_exp(logits);
}

namespace detail {

// n x M1 matrix of per-component Gaussian log-densities (zeros when the
// Gaussian factor is dropped).
inline Matrix gaussian_log_matrix(const LabeledDataset& data,
                                  const std::vector<GaussianComponent>& gaussians, Mode mode) {
    if (mode == Mode::conditional_only)
        return Matrix::Zero(data.n(), static_cast<Eigen::Index>(gaussians.size()));
    Matrix lg(data.n(), static_cast<Eigen::Index>(gaussians.size()));
    for (std::size_t m = 0; m < gaussians.size(); ++m) {
        GaussianDensity dens(gaussians[m].mu, gaussians[m].sigma,
                             "gaussian component " + std::to_string(m));
        lg.col(static_cast<Eigen::Index>(m)) = dens(data.xs);
    }
    return lg;
}

// n x M2 matrix of per-learner log P(y_i | x_i) (zeros in unsupervised mode).
inline Matrix learner_log_matrix(const LabeledDataset& data,
                                 const std::vector<LearnerParams>& learners, Mode mode,
                                 int m2_grid) {
    if (mode == Mode::unsupervised) return Matrix::Zero(data.n(), m2_grid);
    Matrix ll(data.n(), static_cast<Eigen::Index>(learners.size()));
    for (std::size_t m = 0; m < learners.size(); ++m) {
        Matrix lp = learner_log_probs(learners[m], data.xs);
        for (int i = 0; i < data.n(); ++i) {
            const int y = data.ys[static_cast<std::size_t>(i)];
            if (y < 0 || y >= lp.cols())
                throw std::invalid_argument("label out of range at sample " + std::to_string(i));
            ll(i, static_cast<Eigen::Index>(m)) = lp(i, y);
        }
    }
    return ll;
}

// Unnormalized log q: log pi + gaussian + learner termwise over the grid.
inline Matrix joint_log_grid(const LabeledDataset& data, const MixtureWeights& weights,
                             const std::vector<GaussianComponent>& gaussians,
                             const std::vector<LearnerParams>& learners, Mode mode) {
    const int m1 = weights.m1();
    const int m2 = weights.m2();
    const Matrix lg = gaussian_log_matrix(data, gaussians, mode);
    const Matrix ll = learner_log_matrix(data, learners, mode, m2);
    if (mode != Mode::conditional_only && lg.cols() != m1)
        throw std::invalid_argument("e_step: gaussian count does not match weight grid");
    if (mode != Mode::unsupervised && ll.cols() != m2)
        throw std::invalid_argument("e_step: learner count does not match weight grid");
    Matrix out(data.n(), m1 * m2);
    for (int a = 0; a < m1; ++a)
        for (int b = 0; b < m2; ++b)
            out.col(a * m2 + b) = (lg.col(a) + ll.col(b)).array() + weights.log_pi(a, b);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// E-step and M-steps

inline ResponsibilityBlock e_step(const LabeledDataset& data, const MixtureWeights& weights,
                                  const std::vector<GaussianComponent>& gaussians,
                                  const std::vector<LearnerParams>& learners,
                                  Mode mode = Mode::full) {
    ResponsibilityBlock resp;
    resp.M1 = weights.m1();
    resp.M2 = weights.m2();
    resp.log_q = detail::joint_log_grid(data, weights, gaussians, learners, mode);
    Eigen::Index bad = -1;
    Vector z = rowwise_log_sum_exp(resp.log_q, &bad);
    if (bad >= 0)
        throw numeric_error("e_step: degenerate responsibility row at sample " +
                            std::to_string(bad) + " (all cells -inf)");
    resp.log_q.colwise() -= z;
    return resp;
}

inline MixtureWeights m_step_pi(const ResponsibilityBlock& resp) {
    if (resp.n() == 0) throw std::invalid_argument("m_step_pi: empty client");
    Vector mean = exp_exact(resp.log_q).colwise().mean().transpose();
    MixtureWeights w;
    // mean[m1 * M2 + m2] -> log_pi(m1, m2); the column-major Map is (m2, m1).
    w.log_pi = Eigen::Map<const Matrix>(mean.data(), resp.M2, resp.M1).transpose();
    w.log_pi = w.log_pi.array().log().matrix();
    return w;
}

struct GaussianStats {
    Vector mu;
    Matrix sigma;
    double mass = 0.0;
    bool starved = false;
};

// Weighted mean and scatter for Gaussian component m1, with the scatter
// centered on the newly computed mean. Components whose responsibility mass
// falls below rel_threshold * n are flagged starved and left unevaluated; the
// caller keeps the previous parameters.
inline GaussianStats m_step_gaussian(const ResponsibilityBlock& resp, const LabeledDataset& data,
                                     int m1, double rel_threshold = 1e-8) {
    if (m1 < 0 || m1 >= resp.M1) throw std::invalid_argument("m_step_gaussian: bad component index");
    if (resp.n() != data.n()) throw std::invalid_argument("m_step_gaussian: size mismatch");
    GaussianStats st;
    Vector w = exp_exact(resp.log_q.middleCols(m1 * resp.M2, resp.M2)).rowwise().sum();
    st.mass = w.sum();
    if (st.mass < rel_threshold * data.n()) {
        st.starved = true;
        return st;
    }
    st.mu = data.xs.transpose() * w / st.mass;
    Matrix centered = data.xs.rowwise() - st.mu.transpose();
    st.sigma = centered.transpose() * (centered.array().colwise() * w.array()).matrix() / st.mass;
    return st;
}

// `steps` epochs of mini-batch gradient descent on the responsibility-weighted
// cross-entropy, starting from the broadcast parameters. The mini-batch order
// is drawn from `rng` so that a fixed seed reproduces the descent exactly.
inline LearnerParams m_step_learner(const ResponsibilityBlock& resp, const LabeledDataset& data,
                                    int m2, const LearnerParams& theta0, int steps, double lr,
                                    int batch, std::mt19937_64& rng) {
    if (steps < 1) throw std::invalid_argument("m_step_learner: steps must be >= 1");
    if (lr <= 0) throw std::invalid_argument("m_step_learner: lr must be positive");
    if (batch < 1) throw std::invalid_argument("m_step_learner: batch must be >= 1");
    if (m2 < 0 || m2 >= resp.M2) throw std::invalid_argument("m_step_learner: bad learner index");
    const int n = data.n();
    const int k = theta0.num_classes();
    Vector w(n);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int a = 0; a < resp.M1; ++a) s += std::exp(resp.log_cell(i, a, m2));
        w[i] = s;
    }
    if (w.maxCoeff() == 0.0) return theta0;  // zero gradient everywhere

    LearnerParams theta = theta0;
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < steps; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (int start = 0; start < n; start += batch) {
            const int b = std::min(batch, n - start);
            Matrix xb(b, data.dim());
            Matrix g(b, k);  // (softmax - onehot) * weight, row per sample
            for (int r = 0; r < b; ++r) {
                const int i = order[static_cast<std::size_t>(start + r)];
                xb.row(r) = data.xs.row(i);
            }
            Matrix logits = xb * theta.W.transpose();
            logits.rowwise() += theta.b.transpose();
            Vector z = rowwise_log_sum_exp(logits);
            for (int r = 0; r < b; ++r) {
                const int i = order[static_cast<std::size_t>(start + r)];
                g.row(r) = ((logits.row(r).array() - z[r]).exp() * w[i]).matrix();
                g(r, data.ys[static_cast<std::size_t>(i)]) -= w[i];
            }
            theta.W.noalias() -= (lr / b) * (g.transpose() * xb);
            theta.b.noalias() -= (lr / b) * g.colwise().sum().transpose();
        }
        // Weighted cross-entropy on the full client data; a divergent descent
        // shows up here as inf/NaN.
        Matrix lp = learner_log_probs(theta, data.xs);
        double loss = 0.0;
        for (int i = 0; i < n; ++i) loss -= w[i] * lp(i, data.ys[static_cast<std::size_t>(i)]);
        if (!std::isfinite(loss))
            throw numeric_error("m_step_learner: non-finite loss at step " + std::to_string(epoch));
    }
    return theta;
}

// ---------------------------------------------------------------------------
// Prediction and likelihood scoring

// Per-class unnormalized log-scores: log sum_{m1,m2} pi * N(x) * P(y|x).
inline Vector class_log_scores(const Vector& x, const MixtureWeights& weights,
                               const std::vector<GaussianComponent>& gaussians,
                               const std::vector<LearnerParams>& learners,
                               Mode mode = Mode::full) {
    const int m1 = weights.m1();
    const int m2 = weights.m2();
    const int k = learners.at(0).num_classes();
    Vector lg = Vector::Zero(m1);
    if (mode != Mode::conditional_only)
        for (int a = 0; a < m1; ++a)
            lg[a] = GaussianDensity(gaussians[static_cast<std::size_t>(a)].mu,
                                    gaussians[static_cast<std::size_t>(a)].sigma)(x);
    Matrix ls(m2, k);
    for (int b = 0; b < m2; ++b) {
        Vector logits = learners[static_cast<std::size_t>(b)].W * x +
                        learners[static_cast<std::size_t>(b)].b;
        ls.row(b) = (logits.array() - log_sum_exp(logits)).transpose();
    }
    Vector scores(k);
    Vector cells(m1 * m2);
    for (int y = 0; y < k; ++y) {
        for (int a = 0; a < m1; ++a)
            for (int b = 0; b < m2; ++b)
                cells[a * m2 + b] = weights.log_pi(a, b) + lg[a] + ls(b, y);
        scores[y] = log_sum_exp(cells);
    }
    return scores;
}

// Argmax over classes; ties resolve to the lowest class index.
inline int predict_label(const Vector& x, const MixtureWeights& weights,
                         const std::vector<GaussianComponent>& gaussians,
                         const std::vector<LearnerParams>& learners, Mode mode = Mode::full) {
    Vector scores = class_log_scores(x, weights, gaussians, learners, mode);
    int best = 0;
    for (int y = 1; y < scores.size(); ++y)
        if (scores[y] > scores[best]) best = y;
    return best;
}

// Batch prediction over the rows of xs.
inline std::vector<int> predict_labels(const Matrix& xs, const MixtureWeights& weights,
                                       const std::vector<GaussianComponent>& gaussians,
                                       const std::vector<LearnerParams>& learners,
                                       Mode mode = Mode::full) {
    const int n = static_cast<int>(xs.rows());
    const int m1 = weights.m1();
    const int m2 = weights.m2();
    const int k = learners.at(0).num_classes();
    LabeledDataset probe;
    probe.xs = xs;
    Matrix lg = detail::gaussian_log_matrix(probe, gaussians, mode);
    std::vector<Matrix> lp(static_cast<std::size_t>(m2));
    for (int b = 0; b < m2; ++b)
        lp[static_cast<std::size_t>(b)] = learner_log_probs(learners[static_cast<std::size_t>(b)], xs);
    std::vector<int> out(static_cast<std::size_t>(n));
    Vector cells(m1 * m2);
    for (int i = 0; i < n; ++i) {
        double best = kNegInf;
        int arg = 0;
        for (int y = 0; y < k; ++y) {
            for (int a = 0; a < m1; ++a)
                for (int b = 0; b < m2; ++b)
                    cells[a * m2 + b] =
                        weights.log_pi(a, b) + lg(i, a) + lp[static_cast<std::size_t>(b)](i, y);
            const double s = log_sum_exp(cells);
            if (s > best) {
                best = s;
                arg = y;
            }
        }
        out[static_cast<std::size_t>(i)] = arg;
    }
    return out;
}

// log sum_{m1,m2} pi(m1,m2) N(x; mu_m1, sigma_m1) -- the model's marginal
// density of x (the learner factor integrates out).
inline double log_marginal_x(const Vector& x, const MixtureWeights& weights,
                             const std::vector<GaussianComponent>& gaussians) {
    Vector row_mass = weights.log_row_mass();
    Vector terms(weights.m1());
    for (int a = 0; a < weights.m1(); ++a)
        terms[a] = row_mass[a] + GaussianDensity(gaussians[static_cast<std::size_t>(a)].mu,
                                                 gaussians[static_cast<std::size_t>(a)].sigma)(x);
    return log_sum_exp(terms);
}

// Batch marginal over the rows of xs.
inline Vector log_marginal_x(const Matrix& xs, const MixtureWeights& weights,
                             const std::vector<GaussianComponent>& gaussians) {
    LabeledDataset probe;
    probe.xs = xs;
    Matrix lg = detail::gaussian_log_matrix(probe, gaussians, Mode::full);
    lg.rowwise() += weights.log_row_mass().transpose();
    return rowwise_log_sum_exp(lg);
}

// log sum_{m1,m2} pi * N(x) * P(y|x): the joint mixture score of one sample.
inline double log_joint_xy(const Vector& x, int y, const MixtureWeights& weights,
                           const std::vector<GaussianComponent>& gaussians,
                           const std::vector<LearnerParams>& learners, Mode mode = Mode::full) {
    if (mode == Mode::unsupervised) return log_marginal_x(x, weights, gaussians);
    Vector scores = class_log_scores(x, weights, gaussians, learners, mode);
    if (y < 0 || y >= scores.size())
        throw std::invalid_argument("log_joint_xy: label out of range");
    return scores[y];
}

// Normalized log P(y | x) under the mixture: log joint minus log marginal.
inline double log_conditional_y(const Vector& x, int y, const MixtureWeights& weights,
                                const std::vector<GaussianComponent>& gaussians,
                                const std::vector<LearnerParams>& learners) {
    return log_joint_xy(x, y, weights, gaussians, learners) - log_marginal_x(x, weights, gaussians);
}

// Per-sample log-likelihood vector for one client; the sum is that client's
// term of the global objective F.
inline Vector per_sample_log_likelihood(const LabeledDataset& data, const MixtureWeights& weights,
                                        const std::vector<GaussianComponent>& gaussians,
                                        const std::vector<LearnerParams>& learners,
                                        Mode mode = Mode::full) {
    Matrix grid = detail::joint_log_grid(data, weights, gaussians, learners, mode);
    Eigen::Index bad = -1;
    Vector out = rowwise_log_sum_exp(grid, &bad);
    if (bad >= 0)
        throw numeric_error("log_likelihood: degenerate sample " + std::to_string(bad));
    return out;
}

inline double client_log_likelihood(const LabeledDataset& data, const MixtureWeights& weights,
                                    const std::vector<GaussianComponent>& gaussians,
                                    const std::vector<LearnerParams>& learners,
                                    Mode mode = Mode::full) {
    return per_sample_log_likelihood(data, weights, gaussians, learners, mode).sum();
}

}  // namespace fedgmm
