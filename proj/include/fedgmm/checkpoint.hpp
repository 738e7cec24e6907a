#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedgmm/datagen.hpp"
#include "fedgmm/errors.hpp"
#include "fedgmm/eval.hpp"
#include "fedgmm/federation.hpp"
#include "fedgmm/mixture.hpp"

// Model checkpoints and run artifacts. The checkpoint is a single
// self-describing text document: header fields, then one row per parameter
// block (means, covariances, learner weights, per-client log weight grids),
// all doubles at %.17g so save/load round-trips exactly.

namespace fedgmm {

struct Checkpoint {
    GlobalModel model;
    std::vector<int> client_ids;
    std::vector<MixtureWeights> client_pis;
    int d = 0;
    int K = 2;
    Mode mode = Mode::full;
    CovMode cov = CovMode::free_cov;
};

namespace detail {

inline void emit_values(std::ostream& f, const double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) f << ',' << format_double(data[i]);
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::ostringstream f;
    f << "format_version,1\n"
      << "mode," << mode_to_string(ckpt.mode) << '\n'
      << "cov," << cov_to_string(ckpt.cov) << '\n'
      << "d," << ckpt.d << '\n'
      << "K," << ckpt.K << '\n'
      << "M1," << ckpt.model.m1() << '\n'
      << "M2," << ckpt.model.m2() << '\n'
      << "round," << ckpt.model.round << '\n'
      << "clients," << ckpt.client_ids.size() << '\n';
    for (std::size_t m = 0; m < ckpt.model.gaussians.size(); ++m) {
        const auto& g = ckpt.model.gaussians[m];
        f << "gaussian_mu," << m;
        detail::emit_values(f, g.mu.data(), static_cast<std::size_t>(g.mu.size()));
        f << '\n' << "gaussian_sigma," << m;
        // Row-major emission; sigma is symmetric but rows are written as rows.
        for (Eigen::Index i = 0; i < g.sigma.rows(); ++i)
            for (Eigen::Index j = 0; j < g.sigma.cols(); ++j)
                f << ',' << detail::format_double(g.sigma(i, j));
        f << '\n';
    }
    for (std::size_t m = 0; m < ckpt.model.learners.size(); ++m) {
        const auto& t = ckpt.model.learners[m];
        f << "learner_W," << m;
        for (Eigen::Index i = 0; i < t.W.rows(); ++i)
            for (Eigen::Index j = 0; j < t.W.cols(); ++j)
                f << ',' << detail::format_double(t.W(i, j));
        f << '\n' << "learner_b," << m;
        detail::emit_values(f, t.b.data(), static_cast<std::size_t>(t.b.size()));
        f << '\n';
    }
    for (std::size_t c = 0; c < ckpt.client_ids.size(); ++c) {
        f << "log_pi," << ckpt.client_ids[c];
        const auto& pi = ckpt.client_pis[c].log_pi;
        for (Eigen::Index i = 0; i < pi.rows(); ++i)
            for (Eigen::Index j = 0; j < pi.cols(); ++j)
                f << ',' << detail::format_double(pi(i, j));
        f << '\n';
    }
    return f.str();
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw data_error("save_checkpoint: cannot open '" + path + "'");
    f << serialize_checkpoint(ckpt);
    if (!f) throw data_error("save_checkpoint: write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("load_checkpoint: cannot open '" + path + "'");
    Checkpoint ckpt;
    int m1 = -1, m2 = -1;
    std::string line;
    int line_no = 0;
    auto header_int = [&](const char* key) -> long {
        if (!std::getline(f, line))
            throw data_error(path + ": truncated header (missing '" + std::string(key) + "')");
        ++line_no;
        auto toks = detail::split_csv(line);
        if (toks.size() != 2 || toks[0] != key)
            throw data_error(path + ":" + std::to_string(line_no) + ": expected '" +
                             std::string(key) + ",<value>'");
        return detail::parse_int(path, line_no, toks[1]);
    };
    auto header_str = [&](const char* key) -> std::string {
        if (!std::getline(f, line))
            throw data_error(path + ": truncated header (missing '" + std::string(key) + "')");
        ++line_no;
        auto toks = detail::split_csv(line);
        if (toks.size() != 2 || toks[0] != key)
            throw data_error(path + ":" + std::to_string(line_no) + ": expected '" +
                             std::string(key) + ",<value>'");
        return toks[1];
    };

    if (header_int("format_version") != 1)
        throw data_error(path + ":1: unknown checkpoint format_version");
    ckpt.mode = mode_from_string(header_str("mode"));
    ckpt.cov = cov_from_string(header_str("cov"));
    ckpt.d = static_cast<int>(header_int("d"));
    ckpt.K = static_cast<int>(header_int("K"));
    m1 = static_cast<int>(header_int("M1"));
    m2 = static_cast<int>(header_int("M2"));
    ckpt.model.round = static_cast<int>(header_int("round"));
    const long n_clients = header_int("clients");
    if (ckpt.d < 1 || ckpt.K < 2 || m1 < 1 || m2 < 0 || n_clients < 0)
        throw data_error(path + ": invalid checkpoint header values");

    ckpt.model.gaussians.resize(static_cast<std::size_t>(m1));
    for (auto& g : ckpt.model.gaussians) {
        g.mu = Vector::Zero(ckpt.d);
        g.sigma = Matrix::Zero(ckpt.d, ckpt.d);
    }
    ckpt.model.learners.resize(static_cast<std::size_t>(m2));
    for (auto& t : ckpt.model.learners) {
        t.W = Matrix::Zero(ckpt.K, ckpt.d);
        t.b = Vector::Zero(ckpt.K);
    }

    auto parse_row = [&](const std::vector<std::string>& toks, std::size_t expected,
                         auto&& store) {
        if (toks.size() != expected + 2)
            throw data_error(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(expected + 2) + " fields, got " +
                             std::to_string(toks.size()));
        const long index = detail::parse_int(path, line_no, toks[1]);
        for (std::size_t i = 0; i < expected; ++i)
            store(index, i, detail::parse_double(path, line_no, toks[i + 2]));
    };

    const std::size_t dd = static_cast<std::size_t>(ckpt.d);
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto toks = detail::split_csv(line);
        const std::string& key = toks[0];
        if (key == "gaussian_mu") {
            parse_row(toks, dd, [&](long m, std::size_t i, double v) {
                if (m < 0 || m >= m1) throw data_error(path + ": gaussian index out of range");
                ckpt.model.gaussians[static_cast<std::size_t>(m)].mu[static_cast<Eigen::Index>(i)] = v;
            });
        } else if (key == "gaussian_sigma") {
            parse_row(toks, dd * dd, [&](long m, std::size_t i, double v) {
                if (m < 0 || m >= m1) throw data_error(path + ": gaussian index out of range");
                ckpt.model.gaussians[static_cast<std::size_t>(m)].sigma(
                    static_cast<Eigen::Index>(i / dd), static_cast<Eigen::Index>(i % dd)) = v;
            });
        } else if (key == "learner_W") {
            parse_row(toks, static_cast<std::size_t>(ckpt.K) * dd,
                      [&](long m, std::size_t i, double v) {
                          if (m < 0 || m >= m2)
                              throw data_error(path + ": learner index out of range");
                          ckpt.model.learners[static_cast<std::size_t>(m)].W(
                              static_cast<Eigen::Index>(i / dd),
                              static_cast<Eigen::Index>(i % dd)) = v;
                      });
        } else if (key == "learner_b") {
            parse_row(toks, static_cast<std::size_t>(ckpt.K), [&](long m, std::size_t i, double v) {
                if (m < 0 || m >= m2) throw data_error(path + ": learner index out of range");
                ckpt.model.learners[static_cast<std::size_t>(m)].b[static_cast<Eigen::Index>(i)] = v;
            });
        } else if (key == "log_pi") {
            MixtureWeights pi;
            pi.log_pi = Matrix::Zero(m1, std::max(m2, 1));
            const std::size_t cells = static_cast<std::size_t>(pi.log_pi.size());
            int id = 0;
            parse_row(toks, cells, [&](long client, std::size_t i, double v) {
                id = static_cast<int>(client);
                pi.log_pi(static_cast<Eigen::Index>(i) / pi.log_pi.cols(),
                          static_cast<Eigen::Index>(i) % pi.log_pi.cols()) = v;
            });
            ckpt.client_ids.push_back(id);
            ckpt.client_pis.push_back(std::move(pi));
        } else {
            throw data_error(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
    if (static_cast<long>(ckpt.client_ids.size()) != n_clients)
        throw data_error(path + ": header declares " + std::to_string(n_clients) +
                         " clients, found " + std::to_string(ckpt.client_ids.size()));
    return ckpt;
}

// Round log CSV: one record per round.
inline void write_round_log(const std::string& path, const std::vector<RoundLog>& logs) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw data_error("write_round_log: cannot open '" + path + "'");
    f << "round,F,dF,mean_accuracy\n";
    for (const auto& log : logs) {
        f << log.round << ',' << detail::format_double(log.F) << ','
          << detail::format_double(log.dF) << ',' << detail::format_double(log.mean_accuracy)
          << '\n';
    }
    if (!f) throw data_error("write_round_log: write failed for '" + path + "'");
}

// Novelty-score table; the log p(x) vs log p(y|x) scatter feeds external
// plotting tools directly.
inline void write_ood_scores(const std::string& path, const std::vector<OodScore>& scores) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw data_error("write_ood_scores: cannot open '" + path + "'");
    f << "sample_id,log_px,log_py_x,log_joint,is_novel\n";
    for (const auto& s : scores) {
        f << s.sample_id << ',' << detail::format_double(s.log_px) << ','
          << detail::format_double(s.log_py_x) << ',' << detail::format_double(s.log_joint) << ','
          << (s.is_novel ? 1 : 0) << '\n';
    }
    if (!f) throw data_error("write_ood_scores: write failed for '" + path + "'");
}

// Metric report as flat key,value rows; per-client accuracies keyed by id.
inline void write_metric_report(const std::string& path, const MetricReport& report) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw data_error("write_metric_report: cannot open '" + path + "'");
    f << "metric,value\n";
    if (!std::isnan(report.accuracy_mean))
        f << "accuracy_mean," << detail::format_double(report.accuracy_mean) << '\n';
    if (!std::isnan(report.auroc)) f << "auroc," << detail::format_double(report.auroc) << '\n';
    if (!std::isnan(report.ap)) f << "ap," << detail::format_double(report.ap) << '\n';
    if (!std::isnan(report.max_f1)) f << "max_f1," << detail::format_double(report.max_f1) << '\n';
    for (const auto& [id, acc] : report.accuracy_per_client)
        f << "accuracy_client_" << id << ',' << detail::format_double(acc) << '\n';
    if (!f) throw data_error("write_metric_report: write failed for '" + path + "'");
}

}  // namespace fedgmm
