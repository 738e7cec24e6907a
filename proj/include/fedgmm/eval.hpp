#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "fedgmm/errors.hpp"
#include "fedgmm/federation.hpp"
#include "fedgmm/mixture.hpp"

// Metrics: per-client accuracy under personalized weights, likelihood-based
// novelty scores, the three threshold-free ranking metrics, and the
// max-softmax confidence baseline.

namespace fedgmm {

struct MetricReport {
    double accuracy_mean = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::pair<int, double>> accuracy_per_client;
    double auroc = std::numeric_limits<double>::quiet_NaN();
    double ap = std::numeric_limits<double>::quiet_NaN();
    double max_f1 = std::numeric_limits<double>::quiet_NaN();
};

struct OodScore {
    int sample_id = 0;
    double log_px = 0.0;
    double log_py_x = 0.0;
    double log_joint = 0.0;
    bool is_novel = false;
};

// Mean over clients of per-client test accuracy, predicting with each
// client's own weight grid. Clients with an empty test split are excluded
// with a warning.
inline MetricReport accuracy(const GlobalModel& model, const std::vector<MixtureWeights>& pis,
                             const std::vector<ClientState>& clients, Mode mode = Mode::full) {
    if (pis.size() != clients.size())
        throw std::invalid_argument("accuracy: one weight grid per client required");
    MetricReport report;
    double sum = 0.0;
    int counted = 0;
    for (std::size_t c = 0; c < clients.size(); ++c) {
        const LabeledDataset& test = clients[c].test;
        if (test.n() == 0) {
            std::cerr << "warning: client " << clients[c].client_id
                      << " has an empty test split; excluded from accuracy\n";
            continue;
        }
        std::vector<int> pred = predict_labels(test.xs, pis[c], model.gaussians, model.learners, mode);
        int hits = 0;
        for (int i = 0; i < test.n(); ++i)
            hits += pred[static_cast<std::size_t>(i)] == test.ys[static_cast<std::size_t>(i)];
        const double acc = static_cast<double>(hits) / test.n();
        report.accuracy_per_client.emplace_back(clients[c].client_id, acc);
        sum += acc;
        ++counted;
    }
    if (counted > 0) report.accuracy_mean = sum / counted;
    return report;
}

// Likelihood scores for novelty detection under the aggregated global weight
// grid: log p(x), log p(y|x), and their sum. `is_novel` carries the ground
// truth through to the metric computation.
inline std::vector<OodScore> score_ood(const GlobalModel& model, const MixtureWeights& pi_global,
                                       const LabeledDataset& samples,
                                       const std::vector<char>& is_novel) {
    if (static_cast<int>(is_novel.size()) != samples.n())
        throw std::invalid_argument("score_ood: one novelty flag per sample required");
    Vector log_px = log_marginal_x(samples.xs, pi_global, model.gaussians);
    Matrix grid = detail::joint_log_grid(samples, pi_global, model.gaussians, model.learners,
                                         Mode::full);
    Vector log_joint = rowwise_log_sum_exp(grid);
    std::vector<OodScore> out(static_cast<std::size_t>(samples.n()));
    for (int i = 0; i < samples.n(); ++i) {
        auto& s = out[static_cast<std::size_t>(i)];
        s.sample_id = i;
        s.log_px = log_px[i];
        s.log_joint = log_joint[i];
        s.log_py_x = log_joint[i] - log_px[i];
        s.is_novel = is_novel[static_cast<std::size_t>(i)] != 0;
    }
    return out;
}

namespace detail {

inline void check_two_classes(const std::vector<char>& labels) {
    bool pos = false, neg = false;
    for (char l : labels) (l ? pos : neg) = true;
    if (!pos || !neg)
        throw std::invalid_argument("ranking metric: both classes must be present");
}

// Indices sorted by descending score; groups of tied scores stay adjacent.
inline std::vector<std::size_t> descending_order(const std::vector<double>& scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0u);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

}  // namespace detail

// Area under the ROC curve via the rank statistic; tied scores contribute
// half credit (Mann-Whitney convention).
inline double auroc(const std::vector<double>& scores, const std::vector<char>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("auroc: size mismatch");
    detail::check_two_classes(labels);
    auto idx = detail::descending_order(scores);
    const std::size_t n = scores.size();
    double rank_sum = 0.0;  // midranks of positives (ascending-rank convention)
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        // Descending positions i..j-1 get ascending midrank (n - i + n - j + 1) / 2.
        const double midrank = (static_cast<double>(n - i) + static_cast<double>(n - j + 1)) / 2.0;
        for (std::size_t t = i; t < j; ++t) {
            if (labels[idx[t]]) {
                rank_sum += midrank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    const double u = rank_sum - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Average precision: sum of (recall step) * precision over distinct-score
// thresholds, processed in descending score order.
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<char>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("average_precision: size mismatch");
    detail::check_two_classes(labels);
    auto idx = detail::descending_order(scores);
    double total_pos = 0.0;
    for (char l : labels) total_pos += l ? 1.0 : 0.0;
    double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        for (std::size_t t = i; t < j; ++t) (labels[idx[t]] ? tp : fp) += 1.0;
        const double recall = tp / total_pos;
        const double precision = tp / (tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

// Max F1 over all distinct decision thresholds (predict novel when the score
// is >= the threshold).
inline double max_f1(const std::vector<double>& scores, const std::vector<char>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("max_f1: size mismatch");
    detail::check_two_classes(labels);
    auto idx = detail::descending_order(scores);
    double total_pos = 0.0;
    for (char l : labels) total_pos += l ? 1.0 : 0.0;
    double tp = 0.0, fp = 0.0, best = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        for (std::size_t t = i; t < j; ++t) (labels[idx[t]] ? tp : fp) += 1.0;
        const double f1 = 2.0 * tp / (2.0 * tp + fp + (total_pos - tp));
        best = std::max(best, f1);
        i = j;
    }
    return best;
}

// Max-softmax confidence baseline: per sample, each client's weight grid
// mixes the learners (its learner-side marginal), the confidence is the top
// mixed class probability, and the score is the best confidence over clients.
inline std::vector<double> baseline_confidence_scores(const GlobalModel& model,
                                                      const std::vector<MixtureWeights>& client_pis,
                                                      const Matrix& xs) {
    if (client_pis.empty())
        throw std::invalid_argument("baseline_confidence_scores: no clients");
    const int n = static_cast<int>(xs.rows());
    const int m2 = model.m2();
    const int k = model.learners.at(0).num_classes();
    std::vector<Matrix> lp(static_cast<std::size_t>(m2));
    for (int b = 0; b < m2; ++b)
        lp[static_cast<std::size_t>(b)] = learner_log_probs(model.learners[static_cast<std::size_t>(b)], xs);
    std::vector<double> out(static_cast<std::size_t>(n),
                            -std::numeric_limits<double>::infinity());
    for (const auto& pi : client_pis) {
        Vector col_mass = exp_exact(pi.log_col_mass());
        for (int i = 0; i < n; ++i) {
            double conf = 0.0;
            for (int y = 0; y < k; ++y) {
                double p = 0.0;
                for (int b = 0; b < m2; ++b)
                    p += col_mass[b] * std::exp(lp[static_cast<std::size_t>(b)](i, y));
                conf = std::max(conf, p);
            }
            auto& o = out[static_cast<std::size_t>(i)];
            o = std::max(o, conf);
        }
    }
    return out;
}

}  // namespace fedgmm
