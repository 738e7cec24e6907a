#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

// End-to-end tests of the command-line binary, driven as a subprocess. The
// binary path arrives via the FEDGMM_CLI environment variable.

namespace {

std::string cli_binary() {
    const char* bin = std::getenv("FEDGMM_CLI");
    REQUIRE(bin != nullptr);
    return bin;
}

int run_cli(const std::string& args, const std::string& log = "/dev/null") {
    const std::string cmd = cli_binary() + " " + args + " > " + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream buf;
    buf << f.rdbuf();
    return buf.str();
}

// Fresh scratch directory per test case.
std::string scratch_dir(const std::string& stem) {
    static int counter = 0;
    const std::string path = "/tmp/fedgmm_cli_" + std::to_string(::getpid()) + "_" +
                             std::to_string(counter++) + "_" + stem;
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
    return path;
}

// F column of a round log, as exact strings.
std::vector<std::string> f_column(const std::string& csv_path) {
    std::istringstream in(read_text(csv_path));
    std::string line;
    std::vector<std::string> out;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        const std::size_t a = line.find(',');
        const std::size_t b = line.find(',', a + 1);
        out.push_back(line.substr(a + 1, b - a - 1));
    }
    return out;
}

const std::string kTinyData = " --family gaussian --M 2 --d 2 --C 4 --n 60 --seed 3 ";

}  // namespace

TEST_CASE("cli pipeline: generate, train, eval, ood, adapt") {
    const std::string dir = scratch_dir("pipeline");
    REQUIRE(run_cli("generate" + kTinyData + "--out " + dir) == 0);
    REQUIRE(std::filesystem::exists(dir + "/dataset.csv"));
    REQUIRE(std::filesystem::exists(dir + "/planted.csv"));

    REQUIRE(run_cli("train --data " + dir + "/dataset.csv --M1 2 --M2 2 --rounds 4 --seed 3"
                    " --out " + dir) == 0);
    REQUIRE(std::filesystem::exists(dir + "/model.ckpt"));
    const std::string rounds = read_text(dir + "/rounds.csv");
    REQUIRE(rounds.rfind("round,F,dF,mean_accuracy", 0) == 0);
    REQUIRE(f_column(dir + "/rounds.csv").size() == 4);

    REQUIRE(run_cli("eval --checkpoint " + dir + "/model.ckpt --data " + dir + "/dataset.csv"
                    " --out " + dir) == 0);
    const std::string metrics = read_text(dir + "/metrics.csv");
    REQUIRE(metrics.find("accuracy_mean,") != std::string::npos);
    REQUIRE(metrics.find("accuracy_client_0,") != std::string::npos);
    REQUIRE(metrics.find("accuracy_client_3,") != std::string::npos);

    // A strongly shifted copy of the data should be flagged as novel...
    REQUIRE(run_cli("generate" + kTinyData + "--out " + dir +
                    " --data-out " + dir + "/shifted.csv --shift-scale 0.25 --shift-angle 90") ==
            0);
    REQUIRE(run_cli("ood --checkpoint " + dir + "/model.ckpt --data " + dir + "/dataset.csv"
                    " --shifted " + dir + "/shifted.csv --baseline --out " + dir) == 0);
    const std::string ood_metrics = read_text(dir + "/ood_metrics.csv");
    REQUIRE(ood_metrics.find("auroc,") != std::string::npos);
    REQUIRE(ood_metrics.find("ap,") != std::string::npos);
    REQUIRE(ood_metrics.find("max_f1,") != std::string::npos);
    REQUIRE(std::filesystem::exists(dir + "/ood_baseline.csv"));
    const std::string scores = read_text(dir + "/ood_scores.csv");
    REQUIRE(scores.rfind("sample_id,log_px,log_py_x,log_joint,is_novel", 0) == 0);

    // ...while the identical dataset is indistinguishable: every in/novel pair
    // ties, so the ranking metric sits at exactly one half.
    REQUIRE(run_cli("ood --checkpoint " + dir + "/model.ckpt --data " + dir + "/dataset.csv"
                    " --shifted " + dir + "/dataset.csv --out " + dir +
                    " --metrics-out " + dir + "/ood_same.csv") == 0);
    REQUIRE(read_text(dir + "/ood_same.csv").find("auroc,0.5\n") != std::string::npos);

    const std::string ckpt_before = read_text(dir + "/model.ckpt");
    REQUIRE(run_cli("adapt --checkpoint " + dir + "/model.ckpt --data " + dir + "/dataset.csv"
                    " --steps 3 --out " + dir) == 0);
    const std::string curve = read_text(dir + "/adapt_curve.csv");
    REQUIRE(curve.rfind("step,mean_accuracy", 0) == 0);
    REQUIRE(f_column(dir + "/adapt_curve.csv").size() == 4);  // steps 0..3
    REQUIRE(read_text(dir + "/model.ckpt") == ckpt_before);

    std::filesystem::remove_all(dir);
}

TEST_CASE("cli reruns are byte-identical") {
    const std::string dir = scratch_dir("determinism");
    for (int i = 0; i < 2; ++i) {
        const std::string sub = dir + "/run" + std::to_string(i);
        REQUIRE(run_cli("generate" + kTinyData + "--out " + sub) == 0);
        REQUIRE(run_cli("train --data " + sub + "/dataset.csv --M1 2 --M2 2 --rounds 3"
                        " --seed 3 --out " + sub) == 0);
    }
    REQUIRE(read_text(dir + "/run0/dataset.csv") == read_text(dir + "/run1/dataset.csv"));
    REQUIRE(read_text(dir + "/run0/planted.csv") == read_text(dir + "/run1/planted.csv"));
    REQUIRE(read_text(dir + "/run0/model.ckpt") == read_text(dir + "/run1/model.ckpt"));
    REQUIRE(read_text(dir + "/run0/rounds.csv") == read_text(dir + "/run1/rounds.csv"));

    // A different seed produces a different dataset.
    REQUIRE(run_cli("generate --family gaussian --M 2 --d 2 --C 4 --n 60 --seed 4 --out " + dir +
                    " --data-out " + dir + "/other.csv") == 0);
    REQUIRE(read_text(dir + "/other.csv") != read_text(dir + "/run0/dataset.csv"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("cli worker count does not change results") {
    const std::string dir = scratch_dir("workers");
    REQUIRE(run_cli("generate" + kTinyData + "--out " + dir) == 0);
    for (int w : {1, 4}) {
        REQUIRE(run_cli("train --data " + dir + "/dataset.csv --M1 2 --M2 2 --rounds 3 --seed 3"
                        " --workers " + std::to_string(w) + " --out " + dir +
                        " --checkpoint-out " + dir + "/w" + std::to_string(w) + ".ckpt"
                        " --rounds-out " + dir + "/w" + std::to_string(w) + ".csv") == 0);
    }
    REQUIRE(read_text(dir + "/w1.ckpt") == read_text(dir + "/w4.ckpt"));
    REQUIRE(read_text(dir + "/w1.csv") == read_text(dir + "/w4.csv"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("cli resume continues the objective trajectory exactly") {
    const std::string dir = scratch_dir("resume");
    REQUIRE(run_cli("generate" + kTinyData + "--out " + dir) == 0);
    REQUIRE(run_cli("train --data " + dir + "/dataset.csv --M1 2 --M2 2 --rounds 6 --seed 3"
                    " --out " + dir + " --checkpoint-out " + dir + "/straight.ckpt"
                    " --rounds-out " + dir + "/straight.csv") == 0);
    REQUIRE(run_cli("train --data " + dir + "/dataset.csv --M1 2 --M2 2 --rounds 3 --seed 3"
                    " --out " + dir + " --checkpoint-out " + dir + "/half.ckpt"
                    " --rounds-out " + dir + "/half1.csv") == 0);
    // Structure (mode, grid shape) comes from the checkpoint on resume.
    REQUIRE(run_cli("train --data " + dir + "/dataset.csv --rounds 3 --seed 3"
                    " --out " + dir + " --resume " + dir + "/half.ckpt"
                    " --checkpoint-out " + dir + "/resumed.ckpt"
                    " --rounds-out " + dir + "/half2.csv") == 0);

    std::vector<std::string> split = f_column(dir + "/half1.csv");
    const std::vector<std::string> second = f_column(dir + "/half2.csv");
    split.insert(split.end(), second.begin(), second.end());
    REQUIRE(split == f_column(dir + "/straight.csv"));
    REQUIRE(read_text(dir + "/resumed.ckpt") == read_text(dir + "/straight.ckpt"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("cli dump-config round-trips") {
    const std::string dir = scratch_dir("dump");
    REQUIRE(run_cli("--dump-config --seed 11 --rounds 7 --mode unsupervised --alpha 0.125",
                    dir + "/a.cfg") == 0);
    REQUIRE(run_cli("--dump-config --config " + dir + "/a.cfg", dir + "/b.cfg") == 0);
    REQUIRE(read_text(dir + "/a.cfg") == read_text(dir + "/b.cfg"));
    const std::string cfg = read_text(dir + "/a.cfg");
    REQUIRE(cfg.find("seed = 11") != std::string::npos);
    REQUIRE(cfg.find("rounds = 7") != std::string::npos);
    REQUIRE(cfg.find("mode = unsupervised") != std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cli flags win over the config file") {
    const std::string dir = scratch_dir("precedence");
    {
        std::ofstream f(dir + "/base.cfg");
        f << "seed = 5\n[train]\nrounds = 9\n";
    }
    REQUIRE(run_cli("--dump-config --config " + dir + "/base.cfg --rounds 2", dir + "/out.cfg") ==
            0);
    const std::string cfg = read_text(dir + "/out.cfg");
    REQUIRE(cfg.find("seed = 5") != std::string::npos);
    REQUIRE(cfg.find("rounds = 2") != std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cli exit codes distinguish config, data, and usage errors") {
    const std::string dir = scratch_dir("errors");
    const std::string log = dir + "/err.txt";

    REQUIRE(run_cli("--bogus-flag", log) == 2);
    REQUIRE(read_text(log).rfind("error:", 0) == 0);

    REQUIRE(run_cli("generate --family klingon --out " + dir, log) == 2);
    REQUIRE(read_text(log).rfind("error:", 0) == 0);

    {
        std::ofstream f(dir + "/bad.cfg");
        f << "no_such_key = 1\n";
    }
    REQUIRE(run_cli("--dump-config --config " + dir + "/bad.cfg", log) == 2);

    REQUIRE(run_cli("train --data " + dir + "/missing.csv --out " + dir, log) == 3);
    REQUIRE(read_text(log).rfind("error:", 0) == 0);

    {
        std::ofstream f(dir + "/garbage.ckpt");
        f << "format_version,9\n";
    }
    REQUIRE(run_cli("eval --checkpoint " + dir + "/garbage.ckpt --data " + dir + "/missing.csv",
                    log) == 3);

    REQUIRE(run_cli("train", log) == 2);  // missing required --data
    std::filesystem::remove_all(dir);
}

TEST_CASE("cli degenerate single-cell grid trains as plain averaging") {
    const std::string dir = scratch_dir("degenerate");
    REQUIRE(run_cli("generate" + kTinyData + "--out " + dir) == 0);
    REQUIRE(run_cli("train --data " + dir + "/dataset.csv --M1 1 --M2 1 --rounds 3 --seed 3"
                    " --out " + dir) == 0);
    REQUIRE(run_cli("eval --checkpoint " + dir + "/model.ckpt --data " + dir + "/dataset.csv"
                    " --out " + dir) == 0);
    REQUIRE(read_text(dir + "/metrics.csv").find("accuracy_mean,") != std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cli figure-model data generates and trains in one-dimensional mode") {
    const std::string dir = scratch_dir("figure");
    REQUIRE(run_cli("generate --family figure1 --n 40 --seed 7 --out " + dir) == 0);
    REQUIRE(run_cli("train --data " + dir + "/dataset.csv --M1 2 --M2 2 --rounds 3 --seed 7"
                    " --lr 0.2 --out " + dir) == 0);
    REQUIRE(std::filesystem::exists(dir + "/model.ckpt"));
    std::filesystem::remove_all(dir);
}
