#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "fedgmm/datagen.hpp"

using namespace fedgmm;

namespace {

// Reassemble a client's samples in generation order (the split slices in
// order: train, then val, then test).
Matrix concat_xs(const ClientData& c) {
    Matrix xs(c.total_n(), c.train.dim());
    xs.topRows(c.train.n()) = c.train.xs;
    xs.middleRows(c.train.n(), c.val.n()) = c.val.xs;
    xs.bottomRows(c.test.n()) = c.test.xs;
    return xs;
}

std::vector<int> concat_ys(const ClientData& c) {
    std::vector<int> ys;
    ys.insert(ys.end(), c.train.ys.begin(), c.train.ys.end());
    ys.insert(ys.end(), c.val.ys.begin(), c.val.ys.end());
    ys.insert(ys.end(), c.test.ys.begin(), c.test.ys.end());
    return ys;
}

bool same_clients(const std::vector<ClientData>& a, const std::vector<ClientData>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t c = 0; c < a.size(); ++c) {
        if (a[c].client_id != b[c].client_id) return false;
        for (auto part : {&ClientData::train, &ClientData::val, &ClientData::test}) {
            const LabeledDataset& x = a[c].*part;
            const LabeledDataset& y = b[c].*part;
            if (x.n() != y.n() || x.dim() != y.dim()) return false;
            if ((x.xs.array() != y.xs.array()).any()) return false;
            if (x.ys != y.ys) return false;
        }
    }
    return true;
}

std::string temp_path(const std::string& name) { return "/tmp/fedgmm_test_" + name; }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    f << text;
}

template <typename Fn>
std::string error_message(Fn&& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

}  // namespace

// --- generation ---------------------------------------------------------------

TEST_CASE("generation is deterministic in the seed") {
    SyntheticSpec spec;
    spec.M = 2;
    spec.d = 4;
    spec.C = 3;
    spec.n_per_client = 30;
    spec.seed = 7;
    auto [a, ta] = generate_synthetic(spec);
    auto [b, tb] = generate_synthetic(spec);
    REQUIRE(same_clients(a, b));
    REQUIRE((ta.mus.array() == tb.mus.array()).all());
    REQUIRE((ta.vs.array() == tb.vs.array()).all());
    REQUIRE((ta.pis.array() == tb.pis.array()).all());
    REQUIRE(ta.z == tb.z);

    spec.seed = 8;
    auto [c, tc] = generate_synthetic(spec);
    REQUIRE_FALSE(same_clients(a, c));
}

TEST_CASE("labels agree with the planted hyperplanes in every family") {
    for (Family family : {Family::gaussian, Family::laplace, Family::beta}) {
        SyntheticSpec spec;
        spec.family = family;
        spec.M = 3;
        spec.d = 5;
        spec.C = 4;
        spec.n_per_client = 40;
        spec.seed = 11;
        auto [clients, truth] = generate_synthetic(spec);
        for (std::size_t c = 0; c < clients.size(); ++c) {
            Matrix xs = concat_xs(clients[c]);
            std::vector<int> ys = concat_ys(clients[c]);
            REQUIRE(truth.z[c].size() == static_cast<std::size_t>(xs.rows()));
            for (Eigen::Index i = 0; i < xs.rows(); ++i) {
                const int z = truth.z[c][static_cast<std::size_t>(i)];
                const double margin = (xs.row(i) - truth.mus.row(z)).dot(truth.vs.row(z));
                REQUIRE(ys[static_cast<std::size_t>(i)] == (margin > 0 ? 1 : 0));
            }
        }
    }
}

TEST_CASE("planted mixing weights behave like Dirichlet draws") {
    SyntheticSpec spec;
    spec.M = 4;
    spec.d = 2;
    spec.C = 6;
    spec.n_per_client = 10;
    spec.alpha = 1e6;  // near-uniform regime
    auto [clients, truth] = generate_synthetic(spec);
    for (int c = 0; c < spec.C; ++c) {
        REQUIRE(std::abs(truth.pis.row(c).sum() - 1.0) < 1e-12);
        for (int m = 0; m < spec.M; ++m)
            REQUIRE(std::abs(truth.pis(c, m) - 0.25) < 0.01);
    }

    spec.alpha = 0.05;  // concentrated regime: most mass on one component
    auto [c2, t2] = generate_synthetic(spec);
    double mean_max = 0.0;
    for (int c = 0; c < spec.C; ++c) mean_max += t2.pis.row(c).maxCoeff();
    REQUIRE(mean_max / spec.C > 0.8);
}

TEST_CASE("single-component generation degenerates cleanly") {
    SyntheticSpec spec;
    spec.M = 1;
    spec.d = 3;
    spec.C = 2;
    spec.n_per_client = 20;
    auto [clients, truth] = generate_synthetic(spec);
    REQUIRE((truth.pis.array() == 1.0).all());
    for (const auto& zs : truth.z)
        for (int z : zs) REQUIRE(z == 0);
}

TEST_CASE("lattice means respect the separation floor") {
    Matrix mus = detail::lattice_means(4, 2, 4.0, 1.0);
    REQUIRE((mus.row(0).array() == 1.0).all());
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            REQUIRE((mus.row(i) - mus.row(j)).norm() >= 4.0 - 1e-12);
}

TEST_CASE("beta family stays in the unit cube with matching planted means") {
    SyntheticSpec spec;
    spec.family = Family::beta;
    spec.M = 2;
    spec.d = 3;
    spec.C = 2;
    spec.n_per_client = 50;
    auto [clients, truth] = generate_synthetic(spec);
    for (const auto& c : clients) {
        Matrix xs = concat_xs(c);
        REQUIRE(xs.minCoeff() > 0.0);
        REQUIRE(xs.maxCoeff() < 1.0);
    }
    REQUIRE(truth.mus.minCoeff() > 0.0);
    REQUIRE(truth.mus.maxCoeff() < 1.0);
}

TEST_CASE("the 60/20/20 split is by count and preserves the client id") {
    SyntheticSpec spec;
    spec.M = 2;
    spec.d = 2;
    spec.C = 2;
    spec.n_per_client = 20;
    auto [clients, truth] = generate_synthetic(spec);
    for (const auto& c : clients) {
        REQUIRE(c.train.n() == 12);
        REQUIRE(c.val.n() == 4);
        REQUIRE(c.test.n() == 4);
        REQUIRE(c.train.client_id == c.client_id);
        REQUIRE(c.val.client_id == c.client_id);
        REQUIRE(c.test.client_id == c.client_id);
    }
}

TEST_CASE("spec validation rejects degenerate values") {
    SyntheticSpec spec;
    spec.n_per_client = 4;
    REQUIRE_THROWS_AS(spec.validate(), config_error);
    spec = SyntheticSpec{};
    spec.alpha = 0.0;
    REQUIRE_THROWS_AS(spec.validate(), config_error);
    spec = SyntheticSpec{};
    spec.separation = -1.0;
    REQUIRE_THROWS_AS(spec.validate(), config_error);
    spec = SyntheticSpec{};
    spec.M = 0;
    REQUIRE_THROWS_AS(spec.validate(), config_error);
}

// --- the 1-D illustration set ----------------------------------------------------

TEST_CASE("figure-style generator plants the documented components") {
    auto [clients, truth] = generate_figure1(10000, 3);
    REQUIRE(clients.size() == 2);
    REQUIRE(truth.mus(0, 0) == -2.0);
    REQUIRE(truth.mus(1, 0) == 2.0);
    REQUIRE(std::abs(truth.pis(0, 0) - 0.55) < 1e-15);
    REQUIRE(std::abs(truth.pis(1, 1) - 0.55) < 1e-15);

    for (std::size_t c = 0; c < 2; ++c) {
        Matrix xs = concat_xs(clients[c]);
        std::vector<int> ys = concat_ys(clients[c]);
        double sum[2] = {0, 0};
        int count[2] = {0, 0};
        for (Eigen::Index i = 0; i < xs.rows(); ++i) {
            const int z = truth.z[c][static_cast<std::size_t>(i)];
            sum[z] += xs(i, 0);
            ++count[z];
            // Labels are exactly y = 1{x < mu_z}.
            REQUIRE(ys[static_cast<std::size_t>(i)] == (xs(i, 0) < truth.mus(z, 0) ? 1 : 0));
        }
        REQUIRE(std::abs(sum[0] / count[0] - (-2.0)) < 0.1);
        REQUIRE(std::abs(sum[1] / count[1] - 2.0) < 0.1);
        const double skew = static_cast<double>(count[c == 0 ? 0 : 1]) / xs.rows();
        REQUIRE(std::abs(skew - 0.55) < 0.02);
    }
    REQUIRE_THROWS_AS(generate_figure1(2, 1), config_error);
}

// --- covariate shifts -----------------------------------------------------------

TEST_CASE("identity shift leaves the data bit-exact") {
    SyntheticSpec spec;
    spec.M = 2;
    spec.d = 3;
    spec.C = 1;
    spec.n_per_client = 20;
    auto [clients, truth] = generate_synthetic(spec);
    ShiftSpec none;
    ClientData shifted = apply_shift(clients[0], none);
    REQUIRE(same_clients({shifted}, {clients[0]}));
}

TEST_CASE("shifts compose to their inverses") {
    SyntheticSpec spec;
    spec.M = 2;
    spec.d = 4;
    spec.C = 1;
    spec.n_per_client = 30;
    auto [clients, truth] = generate_synthetic(spec);
    const LabeledDataset& base = clients[0].train;

    ShiftSpec rot;
    rot.angle_deg = 37.0;
    ShiftSpec unrot = rot;
    unrot.angle_deg = -37.0;
    LabeledDataset round_trip = apply_shift(apply_shift(base, rot), unrot);
    REQUIRE((round_trip.xs - base.xs).cwiseAbs().maxCoeff() < 1e-12);

    ShiftSpec reflect;
    reflect.reflect_axis = 2;
    LabeledDataset reflected_twice = apply_shift(apply_shift(base, reflect), reflect);
    REQUIRE((reflected_twice.xs.array() == base.xs.array()).all());

    ShiftSpec down;
    down.scale = 0.5;
    ShiftSpec up;
    up.scale = 2.0;
    LabeledDataset rescaled = apply_shift(apply_shift(base, down), up);
    REQUIRE((rescaled.xs - base.xs).cwiseAbs().maxCoeff() < 1e-12);

    // Labels ride along untouched.
    REQUIRE(round_trip.ys == base.ys);
}

TEST_CASE("rotation validation only applies when a rotation is requested") {
    LabeledDataset data;
    data.xs = Matrix::Ones(3, 2);
    data.ys = {0, 1, 0};
    ShiftSpec bad_axes;
    bad_axes.axis_i = 0;
    bad_axes.axis_j = 5;  // out of range, but angle is zero
    REQUIRE_NOTHROW(apply_shift(data, bad_axes));
    bad_axes.angle_deg = 90.0;
    REQUIRE_THROWS_AS(apply_shift(data, bad_axes), std::invalid_argument);

    ShiftSpec bad_scale;
    bad_scale.scale = 0.0;
    REQUIRE_THROWS_AS(apply_shift(data, bad_scale), std::invalid_argument);
    ShiftSpec bad_reflect;
    bad_reflect.reflect_axis = 2;
    REQUIRE_THROWS_AS(apply_shift(data, bad_reflect), std::invalid_argument);
}

TEST_CASE("label permutation relabels and validates") {
    LabeledDataset data;
    data.xs = Matrix::Zero(3, 1);
    data.ys = {0, 1, 0};
    LabeledDataset swapped = permute_labels(data, {1, 0});
    REQUIRE(swapped.ys == std::vector<int>{1, 0, 1});
    data.ys = {0, 2, 0};
    REQUIRE_THROWS_AS(permute_labels(data, {1, 0}), std::invalid_argument);
}

// --- dataset file I/O -------------------------------------------------------------

TEST_CASE("dataset files round-trip bit-exactly") {
    SyntheticSpec spec;
    spec.M = 2;
    spec.d = 3;
    spec.C = 3;
    spec.n_per_client = 20;
    spec.seed = 13;
    auto [clients, truth] = generate_synthetic(spec);
    const std::string path = temp_path("roundtrip.csv");
    write_dataset(path, clients, 2);
    auto [loaded, k] = read_dataset(path);
    REQUIRE(k == 2);
    REQUIRE(same_clients(loaded, clients));
    std::remove(path.c_str());

    REQUIRE_THROWS_AS(write_dataset(temp_path("empty.csv"), {}, 2), std::invalid_argument);
}

TEST_CASE("read_dataset orders clients by id regardless of row order") {
    const std::string path = temp_path("interleaved.csv");
    write_text(path,
               "version,1\n"
               "d,1\n"
               "K,2\n"
               "clients,2\n"
               "7,train,1.5,0\n"
               "3,train,2.5,1\n"
               "7,val,3.5,1\n"
               "3,test,4.5,0\n"
               "7,test,5.5,0\n");
    auto [clients, k] = read_dataset(path);
    REQUIRE(clients.size() == 2);
    REQUIRE(clients[0].client_id == 3);
    REQUIRE(clients[1].client_id == 7);
    REQUIRE(clients[0].train.xs(0, 0) == 2.5);
    REQUIRE(clients[0].test.xs(0, 0) == 4.5);
    REQUIRE(clients[0].val.n() == 0);
    REQUIRE(clients[1].train.xs(0, 0) == 1.5);
    REQUIRE(clients[1].val.xs(0, 0) == 3.5);
    REQUIRE(clients[1].test.xs(0, 0) == 5.5);
    std::remove(path.c_str());
}

TEST_CASE("read_dataset reports malformed input with the offending line") {
    const std::string base =
        "version,1\n"
        "d,2\n"
        "K,2\n"
        "clients,1\n";

    const std::string p1 = temp_path("badversion.csv");
    write_text(p1, "version,9\nd,1\nK,2\nclients,1\n0,train,1.0,0\n");
    REQUIRE_THROWS_AS(read_dataset(p1), data_error);
    REQUIRE(error_message([&] { read_dataset(p1); }).find("version") != std::string::npos);

    const std::string p2 = temp_path("badfields.csv");
    write_text(p2, base + "0,train,1.0,0\n");  // d=2 but only one feature
    REQUIRE(error_message([&] { read_dataset(p2); }).find(":5:") != std::string::npos);

    const std::string p3 = temp_path("badsplit.csv");
    write_text(p3, base + "0,holdout,1.0,2.0,0\n");
    REQUIRE(error_message([&] { read_dataset(p3); }).find("holdout") != std::string::npos);

    const std::string p4 = temp_path("badlabel.csv");
    write_text(p4, base + "0,train,1.0,2.0,5\n");
    REQUIRE(error_message([&] { read_dataset(p4); }).find("out of range") != std::string::npos);

    const std::string p5 = temp_path("badnumber.csv");
    write_text(p5, base + "0,train,1.0,zebra,0\n");
    REQUIRE(error_message([&] { read_dataset(p5); }).find("zebra") != std::string::npos);

    const std::string p6 = temp_path("badcount.csv");
    write_text(p6,
               "version,1\nd,1\nK,2\nclients,3\n"
               "0,train,1.0,0\n");
    REQUIRE(error_message([&] { read_dataset(p6); }).find("clients") != std::string::npos);

    const std::string p7 = temp_path("truncated.csv");
    write_text(p7, "version,1\nd,1\n");
    REQUIRE(error_message([&] { read_dataset(p7); }).find("truncated") != std::string::npos);

    REQUIRE_THROWS_AS(read_dataset("/nonexistent/nowhere.csv"), data_error);

    for (const auto& p : {p1, p2, p3, p4, p5, p6, p7}) std::remove(p.c_str());
}

TEST_CASE("planted-truth files round-trip bit-exactly") {
    SyntheticSpec spec;
    spec.M = 3;
    spec.d = 4;
    spec.C = 2;
    spec.n_per_client = 10;
    spec.seed = 17;
    auto [clients, truth] = generate_synthetic(spec);
    const std::string path = temp_path("planted.csv");
    write_planted(path, truth);
    PlantedTruth loaded = read_planted(path);
    REQUIRE((loaded.mus.array() == truth.mus.array()).all());
    REQUIRE((loaded.vs.array() == truth.vs.array()).all());
    REQUIRE((loaded.pis.array() == truth.pis.array()).all());
    REQUIRE(loaded.z == truth.z);
    std::remove(path.c_str());

    const std::string bad = temp_path("badplanted.csv");
    write_text(bad, "planted_version,1\nM,2\nwhat,0\n");
    REQUIRE_THROWS_AS(read_planted(bad), data_error);
    std::remove(bad.c_str());
}
