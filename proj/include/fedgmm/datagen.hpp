#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fedgmm/errors.hpp"
#include "fedgmm/mixture.hpp"
#include "fedgmm/rng.hpp"

// Synthetic benchmark generators. Each client draws a private mixing vector
// pi* from Dir(alpha), latent components z ~ pi*, inputs from the component's
// base distribution, and binary labels from the component's hyperplane
// y = 1{(x - mu_z)' v_z > 0}. Per-client streams derive from the master seed
// by client id, so generation is deterministic and order-independent.

namespace fedgmm {

enum class Family { gaussian, laplace, beta, figure1 };

inline Family family_from_string(const std::string& s) {
    if (s == "gaussian") return Family::gaussian;
    if (s == "laplace") return Family::laplace;
    if (s == "beta") return Family::beta;
    if (s == "figure1") return Family::figure1;
    throw config_error("unknown family '" + s + "'");
}

inline std::string family_to_string(Family f) {
    switch (f) {
        case Family::gaussian: return "gaussian";
        case Family::laplace: return "laplace";
        case Family::beta: return "beta";
        case Family::figure1: return "figure1";
    }
    return "gaussian";
}

struct SyntheticSpec {
    Family family = Family::gaussian;
    int M = 3;              // planted components
    int d = 32;             // feature dimension
    int C = 30;             // clients
    int n_per_client = 500; // exact per-client sample count
    double alpha = 0.4;     // Dirichlet concentration
    std::uint64_t seed = 1;
    // Lattice spacing between planted component means, and a constant added
    // to every coordinate of every mean. The offset moves the whole data
    // cloud away from the origin, which is what makes contraction-style
    // covariate shifts land in genuinely low-density regions.
    double separation = 4.0;
    double mean_offset = 0.0;

    void validate() const {
        if (M < 1 || d < 1 || C < 1) throw config_error("M, d, C must be >= 1");
        if (n_per_client < 5) throw config_error("n must be >= 5 (60/20/20 split)");
        if (alpha <= 0.0) throw config_error("alpha must be positive");
        if (separation <= 0.0) throw config_error("separation must be positive");
    }
};

struct PlantedTruth {
    Matrix mus;  // M x d component means (Beta family: per-coordinate means)
    Matrix vs;   // M x d labeling directions
    Matrix pis;  // C x M true mixing weights
    std::vector<std::vector<int>> z;  // per client, per sample (generation order)
};

// One client's 60/20/20 split. All three parts share the client id.
struct ClientData {
    int client_id = -1;
    LabeledDataset train;
    LabeledDataset val;
    LabeledDataset test;

    int total_n() const { return train.n() + val.n() + test.n(); }
};

namespace detail {

inline Vector dirichlet(std::mt19937_64& rng, double alpha, int m) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    Vector pi(m);
    for (int attempt = 0; attempt < 100; ++attempt) {
        double sum = 0.0;
        for (int i = 0; i < m; ++i) {
            pi[i] = gamma(rng);
            sum += pi[i];
        }
        if (sum > 0.0) return pi / sum;
    }
    throw numeric_error("dirichlet: degenerate draw");
}

inline int sample_discrete(std::mt19937_64& rng, const Vector& pi) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(rng);
    double acc = 0.0;
    for (int i = 0; i < pi.size(); ++i) {
        acc += pi[i];
        if (u < acc) return i;
    }
    return static_cast<int>(pi.size()) - 1;
}

inline double sample_laplace(std::mt19937_64& rng, double loc, double scale) {
    std::uniform_real_distribution<double> unif(-0.5, 0.5);
    const double u = unif(rng);
    return loc - scale * (u >= 0 ? 1.0 : -1.0) * std::log(1.0 - 2.0 * std::abs(u));
}

inline double sample_beta(std::mt19937_64& rng, double a, double b) {
    std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    return x / (x + y);
}

// Component means on an axis lattice: component 0 sits at offset*1, component
// m adds separation along axis (m-1) mod d (doubled on the second pass, etc.),
// so pairwise distances are at least `separation`.
inline Matrix lattice_means(int m, int d, double separation, double offset) {
    Matrix mus = Matrix::Constant(m, d, offset);
    for (int i = 1; i < m; ++i)
        mus(i, (i - 1) % d) += separation * (1 + (i - 1) / d);
    return mus;
}

inline ClientData split_client(int client_id, const Matrix& xs, const std::vector<int>& ys) {
    const int n = static_cast<int>(xs.rows());
    const int n_train = (n * 6) / 10;
    const int n_val = (n * 2) / 10;
    const int n_test = n - n_train - n_val;
    ClientData out;
    out.client_id = client_id;
    auto fill = [&](LabeledDataset& ds, int begin, int count) {
        ds.client_id = client_id;
        ds.xs = xs.middleRows(begin, count);
        ds.ys.assign(ys.begin() + begin, ys.begin() + begin + count);
    };
    fill(out.train, 0, n_train);
    fill(out.val, n_train, n_val);
    fill(out.test, n_train + n_val, n_test);
    return out;
}

}  // namespace detail

// The 1-D two-component illustration set: components N(-2, 1.5^2) and
// N(+2, 1.5^2) with labeling rules y = 1{x < -2} and y = 1{x < 2}; two
// clients with mirrored mixing weights (0.55, 0.45). Each client draws
// 2 * n_per_component samples.
inline std::pair<std::vector<ClientData>, PlantedTruth> generate_figure1(int n_per_component,
                                                                         std::uint64_t seed) {
    if (n_per_component < 3) throw config_error("generate_figure1: n too small");
    constexpr double kSkew = 0.55;
    constexpr double kSigma = 1.5;
    PlantedTruth truth;
    truth.mus = Matrix(2, 1);
    truth.mus << -2.0, 2.0;
    truth.vs = Matrix(2, 1);
    truth.vs << -1.0, -1.0;  // y = 1{(x - mu)*(-1) > 0} = 1{x < mu}
    truth.pis = Matrix(2, 2);
    truth.pis << kSkew, 1.0 - kSkew, 1.0 - kSkew, kSkew;

    std::vector<ClientData> clients;
    const int n = 2 * n_per_component;
    for (int c = 0; c < 2; ++c) {
        auto rng = substream(seed, "datagen", static_cast<std::uint64_t>(c) + 1);
        std::normal_distribution<double> normal(0.0, 1.0);
        Vector pi = truth.pis.row(c).transpose();
        Matrix xs(n, 1);
        std::vector<int> ys(static_cast<std::size_t>(n));
        std::vector<int> zs(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const int z = detail::sample_discrete(rng, pi);
            const double mu = truth.mus(z, 0);
            const double x = mu + kSigma * normal(rng);
            xs(i, 0) = x;
            ys[static_cast<std::size_t>(i)] = x < mu ? 1 : 0;
            zs[static_cast<std::size_t>(i)] = z;
        }
        truth.z.push_back(std::move(zs));
        clients.push_back(detail::split_client(c, xs, ys));
    }
    return {std::move(clients), std::move(truth)};
}

inline std::pair<std::vector<ClientData>, PlantedTruth> generate_synthetic(
    const SyntheticSpec& spec) {
    spec.validate();
    if (spec.family == Family::figure1)
        return generate_figure1(std::max(3, spec.n_per_client / 2), spec.seed);

    PlantedTruth truth;
    auto master = substream(spec.seed, "datagen");
    std::normal_distribution<double> normal(0.0, 1.0);

    Matrix beta_a, beta_b;
    if (spec.family == Family::beta) {
        std::uniform_real_distribution<double> ab(2.0, 5.0);
        beta_a = Matrix::NullaryExpr(spec.M, spec.d, [&]() { return ab(master); });
        beta_b = Matrix::NullaryExpr(spec.M, spec.d, [&]() { return ab(master); });
        truth.mus = (beta_a.array() / (beta_a.array() + beta_b.array())).matrix();
    } else {
        truth.mus = detail::lattice_means(spec.M, spec.d, spec.separation, spec.mean_offset);
    }

    truth.vs = Matrix(spec.M, spec.d);
    for (int m = 0; m < spec.M; ++m) {
        Vector v(spec.d);
        for (int j = 0; j < spec.d; ++j) v[j] = normal(master);
        truth.vs.row(m) = (v / v.norm()).transpose();
    }

    truth.pis = Matrix(spec.C, spec.M);
    std::vector<ClientData> clients;
    clients.reserve(static_cast<std::size_t>(spec.C));
    for (int c = 0; c < spec.C; ++c) {
        auto rng = substream(spec.seed, "datagen", static_cast<std::uint64_t>(c) + 1);
        Vector pi = detail::dirichlet(rng, spec.alpha, spec.M);
        truth.pis.row(c) = pi.transpose();
        const int n = spec.n_per_client;
        Matrix xs(n, spec.d);
        std::vector<int> ys(static_cast<std::size_t>(n));
        std::vector<int> zs(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const int z = detail::sample_discrete(rng, pi);
            zs[static_cast<std::size_t>(i)] = z;
            for (int j = 0; j < spec.d; ++j) {
                const double loc = truth.mus(z, j);
                switch (spec.family) {
                    case Family::gaussian: xs(i, j) = loc + normal(rng); break;
                    case Family::laplace: xs(i, j) = detail::sample_laplace(rng, loc, 1.0); break;
                    case Family::beta:
                        xs(i, j) = detail::sample_beta(rng, beta_a(z, j), beta_b(z, j));
                        break;
                    case Family::figure1: break;  // handled above
                }
            }
            const double margin = (xs.row(i) - truth.mus.row(z)).dot(truth.vs.row(z));
            ys[static_cast<std::size_t>(i)] = margin > 0 ? 1 : 0;
        }
        truth.z.push_back(std::move(zs));
        clients.push_back(detail::split_client(c, xs, ys));
    }
    return {std::move(clients), std::move(truth)};
}

// Optional concept-shift transform: relabel with a class permutation.
inline LabeledDataset permute_labels(const LabeledDataset& data, const std::vector<int>& perm) {
    LabeledDataset out = data;
    for (auto& y : out.ys) {
        if (y < 0 || y >= static_cast<int>(perm.size()))
            throw std::invalid_argument("permute_labels: label out of range");
        y = perm[static_cast<std::size_t>(y)];
    }
    return out;
}

// Affine covariate shift: x -> scale * R * reflect(x). The rotation acts in
// the (axis_i, axis_j) coordinate plane; reflection negates one axis.
struct ShiftSpec {
    double scale = 1.0;
    int axis_i = 0;
    int axis_j = 1;
    double angle_deg = 0.0;
    int reflect_axis = -1;  // -1: none

    void validate(int d) const {
        if (scale <= 0.0) throw std::invalid_argument("apply_shift: scale must be positive");
        if (angle_deg != 0.0) {
            if (axis_i < 0 || axis_j < 0 || axis_i >= d || axis_j >= d || axis_i == axis_j)
                throw std::invalid_argument("apply_shift: rotation plane indices out of range");
        }
        if (reflect_axis >= d)
            throw std::invalid_argument("apply_shift: reflection axis out of range");
    }
};

inline LabeledDataset apply_shift(const LabeledDataset& data, const ShiftSpec& shift) {
    shift.validate(data.dim());
    LabeledDataset out = data;
    if (shift.reflect_axis >= 0) out.xs.col(shift.reflect_axis) *= -1.0;
    if (shift.angle_deg != 0.0) {
        const double a = shift.angle_deg * M_PI / 180.0;
        const double c = std::cos(a), s = std::sin(a);
        Vector xi = out.xs.col(shift.axis_i);
        Vector xj = out.xs.col(shift.axis_j);
        out.xs.col(shift.axis_i) = c * xi - s * xj;
        out.xs.col(shift.axis_j) = s * xi + c * xj;
    }
    out.xs *= shift.scale;
    return out;
}

inline ClientData apply_shift(const ClientData& data, const ShiftSpec& shift) {
    ClientData out;
    out.client_id = data.client_id;
    out.train = apply_shift(data.train, shift);
    out.val = apply_shift(data.val, shift);
    out.test = apply_shift(data.test, shift);
    return out;
}

// ---------------------------------------------------------------------------
// Dataset file I/O
//
// Text format, comma-separated, LF endings:
//   version,1
//   d,<dim>
//   K,<classes>
//   clients,<count>
//   <client-id>,<train|val|test>,<f_1>,...,<f_d>,<label>
// Doubles are written with %.17g so the round trip is exact.

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& csv_path, int line_no, const std::string& tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
        throw data_error(csv_path + ":" + std::to_string(line_no) + ": bad number '" + tok + "'");
    return v;
}

inline long parse_int(const std::string& csv_path, int line_no, const std::string& tok) {
    char* end = nullptr;
    const long v = std::strtol(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0')
        throw data_error(csv_path + ":" + std::to_string(line_no) + ": bad integer '" + tok + "'");
    return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

inline void write_rows(std::ofstream& f, const LabeledDataset& ds, const char* tag) {
    for (int i = 0; i < ds.n(); ++i) {
        f << ds.client_id << ',' << tag;
        for (int j = 0; j < ds.dim(); ++j) f << ',' << format_double(ds.xs(i, j));
        f << ',' << ds.ys[static_cast<std::size_t>(i)] << '\n';
    }
}

}  // namespace detail

inline void write_dataset(const std::string& path, const std::vector<ClientData>& clients, int k) {
    if (clients.empty()) throw std::invalid_argument("write_dataset: empty client list");
    const int d = clients.front().train.dim();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw data_error("write_dataset: cannot open '" + path + "'");
    f << "version,1\n" << "d," << d << '\n' << "K," << k << '\n'
      << "clients," << clients.size() << '\n';
    for (const auto& c : clients) {
        detail::write_rows(f, c.train, "train");
        detail::write_rows(f, c.val, "val");
        detail::write_rows(f, c.test, "test");
    }
    if (!f) throw data_error("write_dataset: write failed for '" + path + "'");
}

inline std::pair<std::vector<ClientData>, int> read_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("read_dataset: cannot open '" + path + "'");
    std::string line;
    int line_no = 0;
    auto next_line = [&]() -> bool {
        while (std::getline(f, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) return true;
        }
        return false;
    };
    auto expect_header = [&](const char* key) -> std::string {
        if (!next_line()) throw data_error(path + ": truncated header (missing '" + key + "')");
        auto toks = detail::split_csv(line);
        if (toks.size() != 2 || toks[0] != key)
            throw data_error(path + ":" + std::to_string(line_no) + ": expected '" +
                             key + ",<value>'");
        return toks[1];
    };
    const std::string version_tok = expect_header("version");
    const long version = detail::parse_int(path, line_no, version_tok);
    if (version != 1)
        throw data_error(path + ":1: unknown version " + std::to_string(version));
    const std::string d_tok = expect_header("d");
    const int d = static_cast<int>(detail::parse_int(path, line_no, d_tok));
    const std::string k_tok = expect_header("K");
    const int k = static_cast<int>(detail::parse_int(path, line_no, k_tok));
    const std::string c_tok = expect_header("clients");
    const long n_clients = detail::parse_int(path, line_no, c_tok);
    if (d < 1 || k < 2 || n_clients < 1)
        throw data_error(path + ": invalid header values");

    struct Rows {
        std::vector<Vector> xs;
        std::vector<int> ys;
        std::vector<int> split;  // 0,1,2
    };
    std::vector<int> order;          // client ids by first appearance
    std::vector<Rows> rows_by_slot;  // parallel to order
    auto slot_of = [&](int id) -> Rows& {
        for (std::size_t i = 0; i < order.size(); ++i)
            if (order[i] == id) return rows_by_slot[i];
        order.push_back(id);
        rows_by_slot.emplace_back();
        return rows_by_slot.back();
    };

    while (next_line()) {
        auto toks = detail::split_csv(line);
        if (static_cast<int>(toks.size()) != d + 3)
            throw data_error(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(d + 3) + " fields, got " +
                             std::to_string(toks.size()));
        const int id = static_cast<int>(detail::parse_int(path, line_no, toks[0]));
        int split = -1;
        if (toks[1] == "train") split = 0;
        else if (toks[1] == "val") split = 1;
        else if (toks[1] == "test") split = 2;
        else
            throw data_error(path + ":" + std::to_string(line_no) + ": unknown split tag '" +
                             toks[1] + "'");
        Vector x(d);
        for (int j = 0; j < d; ++j) x[j] = detail::parse_double(path, line_no, toks[2 + j]);
        const int y = static_cast<int>(detail::parse_int(path, line_no, toks[2 + d]));
        if (y < 0 || y >= k)
            throw data_error(path + ":" + std::to_string(line_no) + ": label " +
                             std::to_string(y) + " out of range for K=" + std::to_string(k));
        Rows& r = slot_of(id);
        r.xs.push_back(std::move(x));
        r.ys.push_back(y);
        r.split.push_back(split);
    }
    if (static_cast<long>(order.size()) != n_clients)
        throw data_error(path + ": header declares " + std::to_string(n_clients) +
                         " clients, found " + std::to_string(order.size()));

    std::vector<std::size_t> idx(order.size());
    std::iota(idx.begin(), idx.end(), 0u);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return order[a] < order[b];
    });

    std::vector<ClientData> clients;
    clients.reserve(order.size());
    for (std::size_t slot : idx) {
        const Rows& r = rows_by_slot[slot];
        ClientData c;
        c.client_id = order[slot];
        for (int part = 0; part < 3; ++part) {
            int count = 0;
            for (int s : r.split) count += s == part;
            LabeledDataset ds;
            ds.client_id = order[slot];
            ds.xs.resize(count, d);
            ds.ys.reserve(static_cast<std::size_t>(count));
            int at = 0;
            for (std::size_t i = 0; i < r.xs.size(); ++i) {
                if (r.split[i] != part) continue;
                ds.xs.row(at++) = r.xs[i].transpose();
                ds.ys.push_back(r.ys[i]);
            }
            (part == 0 ? c.train : part == 1 ? c.val : c.test) = std::move(ds);
        }
        clients.push_back(std::move(c));
    }
    return {std::move(clients), k};
}

// Planted-truth sidecar: same CSV discipline, rows keyed by section.
inline void write_planted(const std::string& path, const PlantedTruth& truth) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw data_error("write_planted: cannot open '" + path + "'");
    f << "planted_version,1\n"
      << "M," << truth.mus.rows() << '\n'
      << "d," << truth.mus.cols() << '\n'
      << "C," << truth.pis.rows() << '\n';
    auto emit_matrix = [&](const char* key, const Matrix& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            f << key << ',' << i;
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                f << ',' << detail::format_double(m(i, j));
            f << '\n';
        }
    };
    emit_matrix("mu", truth.mus);
    emit_matrix("v", truth.vs);
    emit_matrix("pi", truth.pis);
    for (std::size_t c = 0; c < truth.z.size(); ++c) {
        f << "z," << c;
        for (int zi : truth.z[c]) f << ',' << zi;
        f << '\n';
    }
    if (!f) throw data_error("write_planted: write failed for '" + path + "'");
}

inline PlantedTruth read_planted(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("read_planted: cannot open '" + path + "'");
    std::string line;
    int line_no = 0;
    PlantedTruth truth;
    int m = -1, d = -1, c = -1;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto toks = detail::split_csv(line);
        const std::string& key = toks[0];
        auto need = [&](std::size_t n) {
            if (toks.size() != n)
                throw data_error(path + ":" + std::to_string(line_no) + ": bad field count");
        };
        if (key == "planted_version") {
            need(2);
            if (detail::parse_int(path, line_no, toks[1]) != 1)
                throw data_error(path + ":1: unknown planted_version");
        } else if (key == "M") {
            need(2);
            m = static_cast<int>(detail::parse_int(path, line_no, toks[1]));
        } else if (key == "d") {
            need(2);
            d = static_cast<int>(detail::parse_int(path, line_no, toks[1]));
            truth.mus = Matrix::Zero(m, d);
            truth.vs = Matrix::Zero(m, d);
        } else if (key == "C") {
            need(2);
            c = static_cast<int>(detail::parse_int(path, line_no, toks[1]));
            truth.pis = Matrix::Zero(c, m);
            truth.z.assign(static_cast<std::size_t>(c), {});
        } else if (key == "mu" || key == "v" || key == "pi") {
            Matrix& target = key == "mu" ? truth.mus : key == "v" ? truth.vs : truth.pis;
            need(static_cast<std::size_t>(target.cols()) + 2);
            const int row = static_cast<int>(detail::parse_int(path, line_no, toks[1]));
            if (row < 0 || row >= target.rows())
                throw data_error(path + ":" + std::to_string(line_no) + ": row out of range");
            for (Eigen::Index j = 0; j < target.cols(); ++j)
                target(row, j) = detail::parse_double(path, line_no, toks[static_cast<std::size_t>(j) + 2]);
        } else if (key == "z") {
            const int row = static_cast<int>(detail::parse_int(path, line_no, toks[1]));
            if (row < 0 || row >= static_cast<int>(truth.z.size()))
                throw data_error(path + ":" + std::to_string(line_no) + ": client out of range");
            auto& zs = truth.z[static_cast<std::size_t>(row)];
            zs.reserve(toks.size() - 2);
            for (std::size_t i = 2; i < toks.size(); ++i)
                zs.push_back(static_cast<int>(detail::parse_int(path, line_no, toks[i])));
        } else {
            throw data_error(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
    if (m < 0 || d < 0 || c < 0) throw data_error(path + ": truncated planted header");
    return truth;
}

}  // namespace fedgmm
