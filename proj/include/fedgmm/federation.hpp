#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "fedgmm/errors.hpp"
#include "fedgmm/math.hpp"
#include "fedgmm/mixture.hpp"
#include "fedgmm/rng.hpp"

// The client-server round protocol. Each round: the server broadcasts the
// shared Gaussian components and learners; every participating client runs
// one local (E, M) cycle, refreshes its personal weight grid, and returns its
// local parameters plus the summed responsibilities gamma; the server forms
// gamma-weighted averages. A centralized EM oracle over the pooled data backs
// the equivalence tests, and pi-only adaptation serves clients unseen during
// training.

namespace fedgmm {

struct FederationConfig {
    int M1 = 3;
    int M2 = 3;
    int rounds = 200;
    std::uint64_t seed = 1;
    Mode mode = Mode::full;
    CovMode cov = CovMode::free_cov;
    bool sigma_correction = false;  // add the between-client mean-spread term
    double participation = 1.0;
    double lr = 0.5;
    int epochs = 1;
    int batch = 128;
    double eps_floor = 1e-6;
    double starve_threshold = 1e-8;  // relative to client sample count
    std::string init = "bootstrap";  // or "farthest"
    int workers = 1;

    void validate() const {
        if (M1 < 1 || M2 < 1) throw config_error("M1 and M2 must be >= 1");
        if (rounds < 0) throw config_error("rounds must be >= 0");
        if (participation <= 0.0 || participation > 1.0)
            throw config_error("participation must be in (0, 1]");
        if (lr <= 0.0) throw config_error("lr must be positive");
        if (epochs < 1) throw config_error("epochs must be >= 1");
        if (batch < 1) throw config_error("batch must be >= 1");
        if (eps_floor <= 0.0) throw config_error("eps_floor must be positive");
        if (workers < 1) throw config_error("workers must be >= 1");
        if (init != "bootstrap" && init != "farthest")
            throw config_error("init must be 'bootstrap' or 'farthest'");
    }
};

struct GlobalModel {
    std::vector<GaussianComponent> gaussians;
    std::vector<LearnerParams> learners;
    int round = 0;

    int m1() const { return static_cast<int>(gaussians.size()); }
    int m2() const { return static_cast<int>(learners.size()); }
    int dim() const { return gaussians.empty() ? 0 : static_cast<int>(gaussians[0].mu.size()); }
};

// What one client sends up: local Gaussian and learner parameters plus the
// exact summed-responsibility grid. Starved components keep their echoed
// broadcast parameters and are flagged so aggregation gives them zero weight.
struct ClientUpdate {
    int client_id = -1;
    int n = 0;
    std::vector<Vector> mu;
    std::vector<Matrix> sigma;
    std::vector<LearnerParams> theta;
    Matrix gamma;  // M1 x M2, sums to n
    std::vector<char> gaussian_starved;
    std::vector<char> learner_starved;
};

struct RoundLog {
    int round = 0;
    double F = 0.0;
    double dF = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> per_client_F;
    double wall_time_s = 0.0;
    double mean_accuracy = std::numeric_limits<double>::quiet_NaN();
};

// One client's persistent state across rounds: its data splits and its
// personalized weight grid (the only personalized parameter).
struct ClientState {
    int client_id = -1;
    LabeledDataset train;
    LabeledDataset val;
    LabeledDataset test;
    MixtureWeights pi;
};

namespace detail {

inline int infer_num_classes(const std::vector<ClientState>& clients) {
    int k = 0;
    for (const auto& c : clients)
        for (int y : c.train.ys) k = std::max(k, y + 1);
    return std::max(k, 2);
}

inline Vector diagonal_variance(const Matrix& xs) {
    Vector mean = xs.colwise().mean().transpose();
    Matrix centered = xs.rowwise() - mean.transpose();
    Vector var = centered.array().square().colwise().mean().transpose();
    return var.cwiseMax(1e-3);  // keep the starting covariance invertible
}

}  // namespace detail

// Initial shared parameters. Gaussian means come from the bootstrap client
// (lowest id): either M1 distinct training points ("bootstrap") or greedy
// farthest-point picks ("farthest"); covariances start at that client's
// diagonal feature variance (identity in fixed-identity mode). Learner
// weights are small Gaussian noise, biases zero.
inline GlobalModel init_model(const std::vector<ClientState>& clients, const FederationConfig& cfg) {
    if (clients.empty()) throw std::invalid_argument("init_model: no clients");
    const auto& boot = clients.front().train;
    if (boot.n() < cfg.M1)
        throw data_error("init_model: bootstrap client has fewer samples than M1");
    const int d = boot.dim();
    const int k = detail::infer_num_classes(clients);

    GlobalModel model;
    model.round = 0;
    auto rng = substream(cfg.seed, "init");

    std::vector<int> picks;
    if (cfg.init == "bootstrap") {
        std::vector<int> idx(static_cast<std::size_t>(boot.n()));
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        picks.assign(idx.begin(), idx.begin() + cfg.M1);
    } else {  // farthest-point seeding
        std::uniform_int_distribution<int> pick(0, boot.n() - 1);
        picks.push_back(pick(rng));
        while (static_cast<int>(picks.size()) < cfg.M1) {
            int best = -1;
            double best_dist = -1.0;
            for (int i = 0; i < boot.n(); ++i) {
                double dist = std::numeric_limits<double>::infinity();
                for (int j : picks)
                    dist = std::min(dist, (boot.xs.row(i) - boot.xs.row(j)).squaredNorm());
                if (dist > best_dist) {
                    best_dist = dist;
                    best = i;
                }
            }
            picks.push_back(best);
        }
    }

    Matrix sigma0;
    if (cfg.cov == CovMode::fixed_identity) {
        sigma0 = Matrix::Identity(d, d);
    } else {
        sigma0 = detail::diagonal_variance(boot.xs).asDiagonal();
    }
    for (int m = 0; m < cfg.M1; ++m) {
        GaussianComponent g;
        g.mu = boot.xs.row(picks[static_cast<std::size_t>(m)]).transpose();
        g.sigma = sigma0;
        model.gaussians.push_back(std::move(g));
    }

    if (cfg.mode != Mode::unsupervised) {
        std::normal_distribution<double> weight_noise(0.0, 0.1);
        for (int m = 0; m < cfg.M2; ++m) {
            auto lrng = substream(cfg.seed, "init", static_cast<std::uint64_t>(m) + 1);
            LearnerParams theta;
            theta.W = Matrix::NullaryExpr(k, d, [&]() { return weight_noise(lrng); });
            theta.b = Vector::Zero(k);
            model.learners.push_back(std::move(theta));
        }
    }
    return model;
}

inline MixtureWeights initial_pi(const FederationConfig& cfg) {
    return MixtureWeights::uniform(cfg.M1, cfg.M2);
}

// One client's local work for one round: E-step with its current pi, pi
// refresh, closed-form Gaussian M-step, and SGD learner M-step from the
// broadcast parameters. Mutates state.pi.
inline ClientUpdate client_round(ClientState& state, const GlobalModel& model,
                                 const FederationConfig& cfg) {
    ResponsibilityBlock resp =
        e_step(state.train, state.pi, model.gaussians, model.learners, cfg.mode);
    state.pi = m_step_pi(resp);

    ClientUpdate up;
    up.client_id = state.client_id;
    up.n = state.train.n();
    // Column c of log_q is cell (c / M2, c % M2); the column-major Map undoes that.
    Vector colsum = exp_exact(resp.log_q).colwise().sum().transpose();
    up.gamma = Eigen::Map<const Matrix>(colsum.data(), cfg.M2, cfg.M1).transpose();
    up.gaussian_starved.assign(static_cast<std::size_t>(cfg.M1), 0);
    up.learner_starved.assign(static_cast<std::size_t>(cfg.M2), 0);

    up.mu.resize(static_cast<std::size_t>(cfg.M1));
    up.sigma.resize(static_cast<std::size_t>(cfg.M1));
    for (int a = 0; a < cfg.M1; ++a) {
        if (cfg.mode == Mode::conditional_only) {
            // Gaussian factor is dropped from the model; components stay frozen.
            up.mu[static_cast<std::size_t>(a)] = model.gaussians[static_cast<std::size_t>(a)].mu;
            up.sigma[static_cast<std::size_t>(a)] = model.gaussians[static_cast<std::size_t>(a)].sigma;
            continue;
        }
        GaussianStats st = m_step_gaussian(resp, state.train, a, cfg.starve_threshold);
        if (st.starved) {
            up.gaussian_starved[static_cast<std::size_t>(a)] = 1;
            up.mu[static_cast<std::size_t>(a)] = model.gaussians[static_cast<std::size_t>(a)].mu;
            up.sigma[static_cast<std::size_t>(a)] = model.gaussians[static_cast<std::size_t>(a)].sigma;
        } else {
            up.mu[static_cast<std::size_t>(a)] = std::move(st.mu);
            up.sigma[static_cast<std::size_t>(a)] =
                cfg.cov == CovMode::fixed_identity
                    ? model.gaussians[static_cast<std::size_t>(a)].sigma
                    : std::move(st.sigma);
        }
    }

    if (cfg.mode != Mode::unsupervised) {
        up.theta.resize(static_cast<std::size_t>(cfg.M2));
        auto rng = substream(cfg.seed, "sgd", static_cast<std::uint64_t>(state.client_id),
                             static_cast<std::uint64_t>(model.round));
        for (int b = 0; b < cfg.M2; ++b) {
            const double col_mass = up.gamma.col(b).sum();
            if (col_mass < cfg.starve_threshold * up.n) {
                up.learner_starved[static_cast<std::size_t>(b)] = 1;
                up.theta[static_cast<std::size_t>(b)] = model.learners[static_cast<std::size_t>(b)];
                continue;
            }
            up.theta[static_cast<std::size_t>(b)] =
                m_step_learner(resp, state.train, b, model.learners[static_cast<std::size_t>(b)],
                               cfg.epochs, cfg.lr, cfg.batch, rng);
        }
    }
    return up;
}

// Server-side gamma-weighted aggregation. Starved contributions get zero
// weight; a component starved on every client keeps the (identical) echoed
// broadcast parameters from the first update. Covariances are PSD-repaired
// before the result is considered broadcastable.
inline GlobalModel aggregate(const std::vector<ClientUpdate>& updates,
                             double eps_floor = 1e-6, CovMode cov = CovMode::free_cov,
                             bool sigma_correction = false,
                             std::vector<int>* carried_gaussians = nullptr,
                             std::vector<int>* carried_learners = nullptr) {
    if (updates.empty()) throw std::invalid_argument("aggregate: no updates");
    const int m1 = static_cast<int>(updates.front().mu.size());
    const int m2 = static_cast<int>(updates.front().theta.size());
    if (carried_gaussians) carried_gaussians->clear();
    if (carried_learners) carried_learners->clear();

    GlobalModel model;
    bool any_mass = false;

    model.gaussians.resize(static_cast<std::size_t>(m1));
    for (int a = 0; a < m1; ++a) {
        double mass = 0.0;
        for (const auto& up : updates)
            if (!up.gaussian_starved[static_cast<std::size_t>(a)]) mass += up.gamma.row(a).sum();
        auto& g = model.gaussians[static_cast<std::size_t>(a)];
        if (mass <= 0.0) {
            g.mu = updates.front().mu[static_cast<std::size_t>(a)];
            g.sigma = updates.front().sigma[static_cast<std::size_t>(a)];
            if (carried_gaussians) carried_gaussians->push_back(a);
            continue;
        }
        any_mass = true;
        g.mu = Vector::Zero(updates.front().mu[static_cast<std::size_t>(a)].size());
        for (const auto& up : updates) {
            if (up.gaussian_starved[static_cast<std::size_t>(a)]) continue;
            g.mu += up.gamma.row(a).sum() * up.mu[static_cast<std::size_t>(a)];
        }
        g.mu /= mass;
        if (cov == CovMode::fixed_identity) {
            g.sigma = updates.front().sigma[static_cast<std::size_t>(a)];
        } else {
            g.sigma = Matrix::Zero(g.mu.size(), g.mu.size());
            for (const auto& up : updates) {
                if (up.gaussian_starved[static_cast<std::size_t>(a)]) continue;
                const double w = up.gamma.row(a).sum();
                g.sigma += w * up.sigma[static_cast<std::size_t>(a)];
                if (sigma_correction) {
                    Vector diff = up.mu[static_cast<std::size_t>(a)] - g.mu;
                    g.sigma += w * diff * diff.transpose();
                }
            }
            g.sigma /= mass;
            g.sigma = repair_psd(g.sigma, eps_floor);
        }
    }

    model.learners.resize(static_cast<std::size_t>(m2));
    for (int b = 0; b < m2; ++b) {
        double mass = 0.0;
        for (const auto& up : updates)
            if (!up.learner_starved[static_cast<std::size_t>(b)]) mass += up.gamma.col(b).sum();
        auto& theta = model.learners[static_cast<std::size_t>(b)];
        if (mass <= 0.0) {
            theta = updates.front().theta[static_cast<std::size_t>(b)];
            if (carried_learners) carried_learners->push_back(b);
            continue;
        }
        any_mass = true;
        theta.W = Matrix::Zero(updates.front().theta[static_cast<std::size_t>(b)].W.rows(),
                               updates.front().theta[static_cast<std::size_t>(b)].W.cols());
        theta.b = Vector::Zero(updates.front().theta[static_cast<std::size_t>(b)].b.size());
        for (const auto& up : updates) {
            if (up.learner_starved[static_cast<std::size_t>(b)]) continue;
            const double w = up.gamma.col(b).sum();
            theta.W += w * up.theta[static_cast<std::size_t>(b)].W;
            theta.b += w * up.theta[static_cast<std::size_t>(b)].b;
        }
        theta.W /= mass;
        theta.b /= mass;
    }

    if (!any_mass && m1 + m2 > 0)
        throw numeric_error("aggregate: zero responsibility mass for every component");
    return model;
}

// Aggregated global mixture weights: pi = sum_c gamma_c / n_c, renormalized.
inline MixtureWeights global_pi(const std::vector<ClientUpdate>& updates) {
    if (updates.empty()) throw std::invalid_argument("global_pi: no updates");
    Matrix acc = Matrix::Zero(updates.front().gamma.rows(), updates.front().gamma.cols());
    for (const auto& up : updates) acc += up.gamma / static_cast<double>(up.n);
    return MixtureWeights::from_linear(acc / acc.sum());
}

// Mean of per-client weight grids; equals global_pi on post-M-step updates
// because each client's refreshed pi is exactly gamma / n.
inline MixtureWeights global_pi_from_weights(const std::vector<MixtureWeights>& pis) {
    if (pis.empty()) throw std::invalid_argument("global_pi_from_weights: no clients");
    Matrix acc = Matrix::Zero(pis.front().log_pi.rows(), pis.front().log_pi.cols());
    for (const auto& p : pis) acc += p.linear();
    return MixtureWeights::from_linear(acc / acc.sum());
}

namespace detail {

inline std::vector<int> pick_participants(int n_clients, const FederationConfig& cfg, int round) {
    std::vector<int> ids(static_cast<std::size_t>(n_clients));
    std::iota(ids.begin(), ids.end(), 0);
    if (cfg.participation >= 1.0) return ids;
    const int take = std::max(1, static_cast<int>(std::lround(cfg.participation * n_clients)));
    auto rng = substream(cfg.seed, "participation", static_cast<std::uint64_t>(round));
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(static_cast<std::size_t>(take));
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace detail

// One synchronized federation round. Participating clients run client_round
// (possibly on several worker threads); updates are aggregated in client-id
// order so the result is independent of scheduling; F is measured after the
// round, over all clients, with each client's fresh weight grid. `prev_f`
// feeds the logged dF.
inline std::pair<GlobalModel, RoundLog> run_round(
    const GlobalModel& model, std::vector<ClientState>& clients, const FederationConfig& cfg,
    double prev_f = std::numeric_limits<double>::quiet_NaN()) {
    if (clients.empty()) throw std::invalid_argument("run_round: no clients");
    const auto t0 = std::chrono::steady_clock::now();

    const std::vector<int> participants =
        detail::pick_participants(static_cast<int>(clients.size()), cfg, model.round);
    std::vector<ClientUpdate> updates(participants.size());

    const int workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(participants.size())));
    if (workers == 1) {
        for (std::size_t i = 0; i < participants.size(); ++i)
            updates[i] = client_round(clients[static_cast<std::size_t>(participants[i])], model, cfg);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w]() {
                try {
                    for (std::size_t i = static_cast<std::size_t>(w); i < participants.size();
                         i += static_cast<std::size_t>(workers))
                        updates[i] =
                            client_round(clients[static_cast<std::size_t>(participants[i])], model, cfg);
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    std::vector<int> carried_g, carried_l;
    GlobalModel next = aggregate(updates, cfg.eps_floor, cfg.cov, cfg.sigma_correction,
                                 &carried_g, &carried_l);
    next.round = model.round + 1;
    if (cfg.mode == Mode::conditional_only) {
        // The Gaussian factor is excluded from the model: the components stay
        // bit-exact copies of the broadcast instead of a re-averaged echo.
        next.gaussians = model.gaussians;
        carried_g.clear();
    }
    for (int a : carried_g)
        std::cerr << "warning: gaussian component " << a
                  << " starved on every client; carried over unchanged (round " << next.round
                  << ")\n";
    for (int b : carried_l)
        std::cerr << "warning: learner " << b
                  << " starved on every client; carried over unchanged (round " << next.round
                  << ")\n";

    RoundLog log;
    log.round = next.round;
    log.per_client_F.reserve(clients.size());
    for (const auto& c : clients)
        log.per_client_F.push_back(
            client_log_likelihood(c.train, c.pi, next.gaussians, next.learners, cfg.mode));
    log.F = std::accumulate(log.per_client_F.begin(), log.per_client_F.end(), 0.0);
    log.dF = log.F - prev_f;
    log.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(next), std::move(log)};
}

// Full federated training: init, T rounds, per-round logs.
inline std::pair<GlobalModel, std::vector<RoundLog>> train_federated(
    std::vector<ClientState>& clients, const FederationConfig& cfg) {
    cfg.validate();
    GlobalModel model = init_model(clients, cfg);
    for (auto& c : clients) c.pi = initial_pi(cfg);
    std::vector<RoundLog> logs;
    logs.reserve(static_cast<std::size_t>(cfg.rounds));
    double prev_f = std::numeric_limits<double>::quiet_NaN();
    for (int t = 0; t < cfg.rounds; ++t) {
        auto [next, log] = run_round(model, clients, cfg, prev_f);
        model = std::move(next);
        prev_f = log.F;
        logs.push_back(std::move(log));
    }
    return {std::move(model), std::move(logs)};
}

// Unsupervised variant: same protocol with the learner factor removed.
inline std::pair<GlobalModel, std::vector<RoundLog>> run_unsupervised(
    std::vector<ClientState>& clients, FederationConfig cfg) {
    cfg.mode = Mode::unsupervised;
    cfg.M2 = 1;
    return train_federated(clients, cfg);
}

// ---------------------------------------------------------------------------
// Centralized EM oracle

// One centralized EM round over the pooled data: per-client E-steps with the
// personal weight grids (those stay per-client even centrally), then M-steps
// computed from global sums over all samples at once -- no per-client
// parameter detour. Learners descend on the pooled weighted data.
inline GlobalModel centralized_round(const GlobalModel& model, std::vector<ClientState>& clients,
                                     const FederationConfig& cfg) {
    std::vector<ResponsibilityBlock> resps(clients.size());
    for (std::size_t c = 0; c < clients.size(); ++c) {
        resps[c] = e_step(clients[c].train, clients[c].pi, model.gaussians, model.learners, cfg.mode);
        clients[c].pi = m_step_pi(resps[c]);
    }

    int total_n = 0;
    for (const auto& c : clients) total_n += c.train.n();

    GlobalModel next;
    next.round = model.round + 1;
    next.gaussians.resize(static_cast<std::size_t>(cfg.M1));
    for (int a = 0; a < cfg.M1; ++a) {
        auto& g = next.gaussians[static_cast<std::size_t>(a)];
        if (cfg.mode == Mode::conditional_only) {
            g = model.gaussians[static_cast<std::size_t>(a)];
            continue;
        }
        double mass = 0.0;
        Vector mu_acc = Vector::Zero(model.dim());
        std::vector<Vector> w_per_client(clients.size());
        for (std::size_t c = 0; c < clients.size(); ++c) {
            Vector w = exp_exact(resps[c].log_q.middleCols(a * cfg.M2, cfg.M2)).rowwise().sum();
            mass += w.sum();
            mu_acc += clients[c].train.xs.transpose() * w;
            w_per_client[c] = std::move(w);
        }
        if (mass < cfg.starve_threshold * total_n) {  // pooled starvation; carry over
            g = model.gaussians[static_cast<std::size_t>(a)];
            continue;
        }
        g.mu = mu_acc / mass;
        if (cfg.cov == CovMode::fixed_identity) {
            g.sigma = model.gaussians[static_cast<std::size_t>(a)].sigma;
        } else {
            Matrix scatter = Matrix::Zero(model.dim(), model.dim());
            for (std::size_t c = 0; c < clients.size(); ++c) {
                Matrix centered = clients[c].train.xs.rowwise() - g.mu.transpose();
                scatter += centered.transpose() *
                           (centered.array().colwise() * w_per_client[c].array()).matrix();
            }
            g.sigma = repair_psd(scatter / mass, cfg.eps_floor);
        }
    }

    if (cfg.mode != Mode::unsupervised) {
        // Pool every client's samples and responsibilities, then run the same
        // SGD M-step once on the pooled data.
        int total = 0;
        for (const auto& c : clients) total += c.train.n();
        LabeledDataset pooled;
        pooled.xs.resize(total, clients.front().train.dim());
        pooled.ys.resize(static_cast<std::size_t>(total));
        ResponsibilityBlock pooled_resp;
        pooled_resp.M1 = cfg.M1;
        pooled_resp.M2 = cfg.M2;
        pooled_resp.log_q.resize(total, cfg.M1 * cfg.M2);
        int at = 0;
        for (std::size_t c = 0; c < clients.size(); ++c) {
            const int n = clients[c].train.n();
            pooled.xs.middleRows(at, n) = clients[c].train.xs;
            std::copy(clients[c].train.ys.begin(), clients[c].train.ys.end(),
                      pooled.ys.begin() + at);
            pooled_resp.log_q.middleRows(at, n) = resps[c].log_q;
            at += n;
        }
        next.learners.resize(static_cast<std::size_t>(cfg.M2));
        auto rng = substream(cfg.seed, "sgd", static_cast<std::uint64_t>(-1),
                             static_cast<std::uint64_t>(model.round));
        for (int b = 0; b < cfg.M2; ++b)
            next.learners[static_cast<std::size_t>(b)] =
                m_step_learner(pooled_resp, pooled, b, model.learners[static_cast<std::size_t>(b)],
                               cfg.epochs, cfg.lr, cfg.batch, rng);
    }
    return next;
}

// Centralized EM across T rounds; the reference implementation the federated
// trajectory is tested against.
inline std::tuple<GlobalModel, std::vector<MixtureWeights>, std::vector<RoundLog>> centralized_em(
    std::vector<ClientState>& clients, const FederationConfig& cfg) {
    cfg.validate();
    if (clients.empty()) throw std::invalid_argument("centralized_em: no clients");
    GlobalModel model = init_model(clients, cfg);
    for (auto& c : clients) c.pi = initial_pi(cfg);
    std::vector<RoundLog> logs;
    double prev_f = std::numeric_limits<double>::quiet_NaN();
    for (int t = 0; t < cfg.rounds; ++t) {
        model = centralized_round(model, clients, cfg);
        RoundLog log;
        log.round = model.round;
        for (const auto& c : clients)
            log.per_client_F.push_back(
                client_log_likelihood(c.train, c.pi, model.gaussians, model.learners, cfg.mode));
        log.F = std::accumulate(log.per_client_F.begin(), log.per_client_F.end(), 0.0);
        log.dF = log.F - prev_f;
        prev_f = log.F;
        logs.push_back(std::move(log));
    }
    std::vector<MixtureWeights> pis;
    pis.reserve(clients.size());
    for (const auto& c : clients) pis.push_back(c.pi);
    return {std::move(model), std::move(pis), std::move(logs)};
}

// pi-only adaptation for a client unseen during training: alternate the
// E-step and the pi M-step against frozen shared parameters. Nothing in
// `model` is written.
inline MixtureWeights adapt_unseen_client(const LabeledDataset& data, const GlobalModel& model,
                                          int steps, Mode mode = Mode::full) {
    if (data.n() == 0) throw std::invalid_argument("adapt_unseen_client: empty data");
    if (steps < 1) throw std::invalid_argument("adapt_unseen_client: steps must be >= 1");
    MixtureWeights pi = MixtureWeights::uniform(model.m1(), std::max(model.m2(), 1));
    for (int s = 0; s < steps; ++s) {
        ResponsibilityBlock resp = e_step(data, pi, model.gaussians, model.learners, mode);
        pi = m_step_pi(resp);
    }
    return pi;
}

}  // namespace fedgmm
