#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "fedgmm/fedgmm.hpp"

// Command-line front end: generate | train | eval | ood | adapt. All knobs
// live in ExperimentConfig; flags mirror config-file keys and win over the
// file. Exit codes: 0 ok, 2 bad configuration, 3 bad data/files, 4 numeric
// failure. Errors print one machine-parsable `error: ...` line on stderr.

namespace {

using namespace fedgmm;

struct CliArgs {
    std::string config_path;
    bool dump_config = false;

    // Per-command file paths; empty means "derive from the out directory".
    std::string data_path;
    std::string shifted_path;
    std::string checkpoint_path;
    std::string resume_path;
    std::string out_file;
    std::string aux_out_file;
    bool with_baseline = false;

    ShiftSpec shift;

    // Deferred key=value overrides, applied on top of the config file in
    // command-line order so later flags win.
    std::vector<std::pair<std::string, std::string>> overrides;
};

// Register a flag that funnels its value through config_set, so flags get
// exactly the same parsing/validation as config-file lines.
void mirror_option(CLI::App* app, CliArgs& args, const std::string& flag, const std::string& key,
                   const std::string& desc) {
    app->add_option_function<std::string>(
        flag, [&args, key](const std::string& v) { args.overrides.emplace_back(key, v); }, desc);
}

std::vector<ClientState> to_states(const std::vector<ClientData>& data) {
    std::vector<ClientState> states(data.size());
    for (std::size_t c = 0; c < data.size(); ++c) {
        states[c].client_id = data[c].client_id;
        states[c].train = data[c].train;
        states[c].val = data[c].val;
        states[c].test = data[c].test;
    }
    return states;
}

void check_shapes(const Checkpoint& ckpt, const std::vector<ClientData>& clients, int k) {
    if (clients.empty()) throw data_error("dataset has no clients");
    const int d = clients.front().train.dim();
    if (d != ckpt.d)
        throw data_error("checkpoint dimension " + std::to_string(ckpt.d) +
                         " does not match dataset dimension " + std::to_string(d));
    if (ckpt.mode != Mode::unsupervised && k != ckpt.K)
        throw data_error("checkpoint has K=" + std::to_string(ckpt.K) + " classes, dataset has " +
                         std::to_string(k));
}

// Look up each dataset client's weight grid in the checkpoint.
std::vector<MixtureWeights> match_pis(const Checkpoint& ckpt,
                                      const std::vector<ClientData>& clients) {
    std::vector<MixtureWeights> pis;
    pis.reserve(clients.size());
    for (const auto& c : clients) {
        bool found = false;
        for (std::size_t i = 0; i < ckpt.client_ids.size(); ++i) {
            if (ckpt.client_ids[i] == c.client_id) {
                pis.push_back(ckpt.client_pis[i]);
                found = true;
                break;
            }
        }
        if (!found)
            throw data_error("client " + std::to_string(c.client_id) +
                             " is not in the checkpoint; use `adapt` for unseen clients");
    }
    return pis;
}

// Resolve an output path, defaulting into the out directory (created lazily).
std::string out_path(const ExperimentConfig& cfg, const std::string& given,
                     const std::string& fallback) {
    if (!given.empty()) return given;
    std::filesystem::create_directories(cfg.out);
    return cfg.out + "/" + fallback;
}

LabeledDataset pooled_test_split(const std::vector<ClientData>& clients) {
    int total = 0;
    for (const auto& c : clients) total += c.test.n();
    if (total == 0) throw data_error("dataset has no test samples");
    LabeledDataset out;
    out.xs.resize(total, clients.front().train.dim());
    out.ys.reserve(static_cast<std::size_t>(total));
    int row = 0;
    for (const auto& c : clients) {
        out.xs.middleRows(row, c.test.n()) = c.test.xs;
        out.ys.insert(out.ys.end(), c.test.ys.begin(), c.test.ys.end());
        row += c.test.n();
    }
    return out;
}

int cmd_generate(const ExperimentConfig& cfg, const CliArgs& args) {
    auto [clients, truth] = generate_synthetic(cfg.data);
    const bool shifted = args.shift.scale != 1.0 || args.shift.angle_deg != 0.0 ||
                         args.shift.reflect_axis >= 0;
    if (shifted) {
        args.shift.validate(clients.front().train.dim());
        for (auto& c : clients) c = apply_shift(c, args.shift);
    }
    const std::string data_path = out_path(cfg, args.out_file, "dataset.csv");
    write_dataset(data_path, clients, 2);
    int total = 0;
    for (const auto& c : clients) {
        std::cout << "client " << c.client_id << ": " << c.total_n() << " samples (train "
                  << c.train.n() << " / val " << c.val.n() << " / test " << c.test.n() << ")\n";
        total += c.total_n();
    }
    std::cout << "wrote " << clients.size() << " clients, " << total << " samples to "
              << data_path << '\n';
    const std::string planted_path = out_path(cfg, args.aux_out_file, "planted.csv");
    write_planted(planted_path, truth);
    std::cout << "wrote planted parameters to " << planted_path << '\n';
    return 0;
}

int cmd_train(ExperimentConfig& cfg, const CliArgs& args) {
    auto [clients_data, k] = read_dataset(args.data_path);
    std::vector<ClientState> clients = to_states(clients_data);

    GlobalModel model;
    std::vector<RoundLog> logs;
    if (!args.resume_path.empty()) {
        Checkpoint ckpt = load_checkpoint(args.resume_path);
        // The checkpoint owns the model structure; remaining knobs (lr,
        // rounds, batch, ...) still come from config and flags.
        cfg.train.mode = ckpt.mode;
        cfg.train.cov = ckpt.cov;
        cfg.train.M1 = ckpt.model.m1();
        cfg.train.M2 = std::max(ckpt.model.m2(), 1);
        cfg.train.validate();
        check_shapes(ckpt, clients_data, k);
        std::vector<MixtureWeights> pis = match_pis(ckpt, clients_data);
        for (std::size_t c = 0; c < clients.size(); ++c) clients[c].pi = pis[c];
        model = std::move(ckpt.model);
        std::cout << "resuming from round " << model.round << '\n';
    } else {
        model = init_model(clients, cfg.train);
        for (auto& c : clients) c.pi = initial_pi(cfg.train);
    }

    double prev_f = std::numeric_limits<double>::quiet_NaN();
    for (int t = 0; t < cfg.train.rounds; ++t) {
        auto [next, log] = run_round(model, clients, cfg.train, prev_f);
        model = std::move(next);
        prev_f = log.F;
        std::cout << "round " << log.round << ": F=" << log.F;
        if (!std::isnan(log.dF)) std::cout << " dF=" << log.dF;
        std::cout << '\n';
        logs.push_back(std::move(log));
    }

    Checkpoint ckpt;
    ckpt.model = std::move(model);
    ckpt.d = clients.front().train.dim();
    ckpt.K = k;
    ckpt.mode = cfg.train.mode;
    ckpt.cov = cfg.train.cov;
    for (const auto& c : clients) {
        ckpt.client_ids.push_back(c.client_id);
        ckpt.client_pis.push_back(c.pi);
    }
    const std::string ckpt_path = out_path(cfg, args.checkpoint_path, "model.ckpt");
    save_checkpoint(ckpt_path, ckpt);
    const std::string rounds_path = out_path(cfg, args.out_file, "rounds.csv");
    write_round_log(rounds_path, logs);
    std::cout << "wrote checkpoint to " << ckpt_path << " and round log to " << rounds_path
              << '\n';
    return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const CliArgs& args) {
    Checkpoint ckpt = load_checkpoint(args.checkpoint_path);
    auto [clients_data, k] = read_dataset(args.data_path);
    check_shapes(ckpt, clients_data, k);
    std::vector<MixtureWeights> pis = match_pis(ckpt, clients_data);
    std::vector<ClientState> clients = to_states(clients_data);
    MetricReport report = accuracy(ckpt.model, pis, clients, ckpt.mode);
    for (const auto& [id, acc] : report.accuracy_per_client)
        std::cout << "client " << id << ": accuracy " << acc << '\n';
    std::cout << "mean accuracy " << report.accuracy_mean << " over "
              << report.accuracy_per_client.size() << " clients\n";
    const std::string metrics_path = out_path(cfg, args.out_file, "metrics.csv");
    write_metric_report(metrics_path, report);
    std::cout << "wrote metrics to " << metrics_path << '\n';
    return 0;
}

int cmd_ood(const ExperimentConfig& cfg, const CliArgs& args) {
    Checkpoint ckpt = load_checkpoint(args.checkpoint_path);
    if (ckpt.mode != Mode::full)
        throw config_error("ood scoring needs a checkpoint trained in full mode");
    auto [in_clients, in_k] = read_dataset(args.data_path);
    auto [novel_clients, novel_k] = read_dataset(args.shifted_path);
    check_shapes(ckpt, in_clients, in_k);
    check_shapes(ckpt, novel_clients, novel_k);

    LabeledDataset in_pool = pooled_test_split(in_clients);
    LabeledDataset novel_pool = pooled_test_split(novel_clients);
    LabeledDataset all;
    all.xs.resize(in_pool.n() + novel_pool.n(), in_pool.dim());
    all.xs << in_pool.xs, novel_pool.xs;
    all.ys = in_pool.ys;
    all.ys.insert(all.ys.end(), novel_pool.ys.begin(), novel_pool.ys.end());
    std::vector<char> is_novel(static_cast<std::size_t>(all.n()), 0);
    std::fill(is_novel.begin() + in_pool.n(), is_novel.end(), 1);

    MixtureWeights pi_global = global_pi_from_weights(ckpt.client_pis);
    std::vector<OodScore> scores = score_ood(ckpt.model, pi_global, all, is_novel);

    // Novelty score = low likelihood, so metrics are computed on the negated
    // log-likelihoods; the joint density is the headline detector.
    std::vector<double> neg_px, neg_pyx, neg_joint;
    for (const auto& s : scores) {
        neg_px.push_back(-s.log_px);
        neg_pyx.push_back(-s.log_py_x);
        neg_joint.push_back(-s.log_joint);
    }
    MetricReport report;
    report.auroc = auroc(neg_joint, is_novel);
    report.ap = average_precision(neg_joint, is_novel);
    report.max_f1 = max_f1(neg_joint, is_novel);
    std::cout << "joint: auroc " << report.auroc << ", ap " << report.ap << ", max-f1 "
              << report.max_f1 << '\n';
    std::cout << "marginal auroc " << auroc(neg_px, is_novel) << ", conditional auroc "
              << auroc(neg_pyx, is_novel) << '\n';

    const std::string scores_path = out_path(cfg, args.out_file, "ood_scores.csv");
    write_ood_scores(scores_path, scores);
    const std::string metrics_path = out_path(cfg, args.aux_out_file, "ood_metrics.csv");
    write_metric_report(metrics_path, report);
    std::cout << "wrote scores to " << scores_path << " and metrics to " << metrics_path << '\n';

    if (args.with_baseline) {
        std::vector<double> conf = baseline_confidence_scores(ckpt.model, ckpt.client_pis, all.xs);
        for (auto& v : conf) v = -v;  // low max-class confidence = more novel
        MetricReport base;
        base.auroc = auroc(conf, is_novel);
        base.ap = average_precision(conf, is_novel);
        base.max_f1 = max_f1(conf, is_novel);
        std::cout << "baseline max-confidence: auroc " << base.auroc << ", ap " << base.ap
                  << ", max-f1 " << base.max_f1 << '\n';
        const std::string base_path = out_path(cfg, "", "ood_baseline.csv");
        write_metric_report(base_path, base);
        std::cout << "wrote baseline metrics to " << base_path << '\n';
    }
    return 0;
}

int cmd_adapt(const ExperimentConfig& cfg, const CliArgs& args) {
    Checkpoint ckpt = load_checkpoint(args.checkpoint_path);
    auto [clients_data, k] = read_dataset(args.data_path);
    check_shapes(ckpt, clients_data, k);
    std::vector<ClientState> clients = to_states(clients_data);

    const std::string ckpt_before = serialize_checkpoint(ckpt);
    std::vector<std::pair<int, double>> curve;
    for (int s = 0; s <= cfg.adapt_steps; ++s) {
        std::vector<MixtureWeights> pis;
        pis.reserve(clients.size());
        for (const auto& c : clients)
            pis.push_back(s == 0 ? MixtureWeights::uniform(ckpt.model.m1(),
                                                           std::max(ckpt.model.m2(), 1))
                                 : adapt_unseen_client(c.train, ckpt.model, s, ckpt.mode));
        MetricReport report = accuracy(ckpt.model, pis, clients, ckpt.mode);
        curve.emplace_back(s, report.accuracy_mean);
        std::cout << "step " << s << ": mean accuracy " << report.accuracy_mean << '\n';
    }
    if (serialize_checkpoint(ckpt) != ckpt_before)
        throw numeric_error("adaptation must not modify the global model");

    const std::string curve_path = out_path(cfg, args.out_file, "adapt_curve.csv");
    std::ofstream f(curve_path, std::ios::binary);
    if (!f) throw data_error("cannot open '" + curve_path + "'");
    f << "step,mean_accuracy\n";
    for (const auto& [s, acc] : curve) f << s << ',' << detail::format_double(acc) << '\n';
    if (!f) throw data_error("write failed for '" + curve_path + "'");
    std::cout << "wrote adaptation curve to " << curve_path << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated Gaussian-mixture training and evaluation"};
    app.require_subcommand(0, 1);
    app.fallthrough();

    CliArgs args;
    app.add_option("--config", args.config_path, "Config file (key = value, sectioned)");
    app.add_flag("--dump-config", args.dump_config,
                 "Print the resolved config and exit without running");
    mirror_option(&app, args, "--seed", "seed", "Master seed for all randomness");
    mirror_option(&app, args, "--out", "out", "Output directory for derived paths");
    mirror_option(&app, args, "--workers", "workers", "Per-round client parallelism");
    mirror_option(&app, args, "--family", "data.family",
                  "Data family: gaussian|laplace|beta|figure1");
    mirror_option(&app, args, "--M", "data.M", "Planted mixture components");
    mirror_option(&app, args, "--d", "data.d", "Feature dimension");
    mirror_option(&app, args, "--C", "data.C", "Number of clients");
    mirror_option(&app, args, "--n", "data.n", "Samples per client");
    mirror_option(&app, args, "--alpha", "data.alpha", "Dirichlet concentration");
    mirror_option(&app, args, "--separation", "data.separation", "Planted mean separation");
    mirror_option(&app, args, "--mean-offset", "data.mean_offset", "Planted mean offset");
    mirror_option(&app, args, "--mode", "train.mode",
                  "Model mode: full|unsupervised|conditional-only");
    mirror_option(&app, args, "--sigma", "train.sigma", "Covariance: free|fixed-identity");
    mirror_option(&app, args, "--sigma-correction", "train.sigma_correction",
                  "Add the between-client mean-spread term (true|false)");
    mirror_option(&app, args, "--M1", "train.M1", "Gaussian components");
    mirror_option(&app, args, "--M2", "train.M2", "Supervised learners");
    mirror_option(&app, args, "--rounds", "train.rounds", "Communication rounds");
    mirror_option(&app, args, "--lr", "train.lr", "Learner step size");
    mirror_option(&app, args, "--epochs", "train.epochs", "Local epochs per round");
    mirror_option(&app, args, "--batch", "train.batch", "Local minibatch size");
    mirror_option(&app, args, "--participation", "train.participation",
                  "Fraction of clients per round");
    mirror_option(&app, args, "--eps-floor", "train.eps_floor", "Covariance eigenvalue floor");
    mirror_option(&app, args, "--starve-threshold", "train.starve_threshold",
                  "Relative responsibility-mass floor");
    mirror_option(&app, args, "--init", "train.init", "Init scheme: bootstrap|farthest");
    mirror_option(&app, args, "--steps", "adapt.steps", "Weight-adaptation steps");

    CLI::App* generate = app.add_subcommand("generate", "Write a synthetic dataset");
    generate->add_option("--data-out", args.out_file, "Dataset path (default <out>/dataset.csv)");
    generate->add_option("--planted-out", args.aux_out_file,
                         "Planted-parameter path (default <out>/planted.csv)");
    generate->add_option("--shift-scale", args.shift.scale, "Feature scale factor");
    generate->add_option("--shift-angle", args.shift.angle_deg, "Rotation angle in degrees");
    generate->add_option("--shift-axis-i", args.shift.axis_i, "First rotation axis");
    generate->add_option("--shift-axis-j", args.shift.axis_j, "Second rotation axis");
    generate->add_option("--shift-reflect", args.shift.reflect_axis,
                         "Axis to negate (-1 for none)");

    CLI::App* train = app.add_subcommand("train", "Run federated rounds on a dataset");
    train->add_option("--data", args.data_path, "Dataset file")->required();
    train->add_option("--checkpoint-out", args.checkpoint_path,
                      "Checkpoint path (default <out>/model.ckpt)");
    train->add_option("--rounds-out", args.out_file, "Round log path (default <out>/rounds.csv)");
    train->add_option("--resume", args.resume_path, "Continue from an existing checkpoint");

    CLI::App* eval_cmd = app.add_subcommand("eval", "Per-client test accuracy of a checkpoint");
    eval_cmd->add_option("--checkpoint", args.checkpoint_path, "Checkpoint file")->required();
    eval_cmd->add_option("--data", args.data_path, "Dataset file")->required();
    eval_cmd->add_option("--metrics-out", args.out_file,
                         "Metric report path (default <out>/metrics.csv)");

    CLI::App* ood = app.add_subcommand("ood", "Score shifted samples against a checkpoint");
    ood->add_option("--checkpoint", args.checkpoint_path, "Checkpoint file")->required();
    ood->add_option("--data", args.data_path, "In-distribution dataset")->required();
    ood->add_option("--shifted", args.shifted_path, "Shifted (novel) dataset")->required();
    ood->add_option("--scores-out", args.out_file,
                    "Score table path (default <out>/ood_scores.csv)");
    ood->add_option("--metrics-out", args.aux_out_file,
                    "Metric report path (default <out>/ood_metrics.csv)");
    ood->add_flag("--baseline", args.with_baseline,
                  "Also score the max-confidence baseline for comparison");

    CLI::App* adapt = app.add_subcommand("adapt", "Fit weight grids for unseen clients");
    adapt->add_option("--checkpoint", args.checkpoint_path, "Checkpoint file")->required();
    adapt->add_option("--data", args.data_path, "Unseen-client dataset")->required();
    adapt->add_option("--curve-out", args.out_file,
                      "Accuracy-vs-step path (default <out>/adapt_curve.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        ExperimentConfig cfg;
        if (!args.config_path.empty()) load_config_file(cfg, args.config_path);
        for (const auto& [key, value] : args.overrides) config_set(cfg, key, value);
        cfg.finalize();

        if (args.dump_config) {
            std::cout << dump_config(cfg);
            return 0;
        }
        if (generate->parsed()) return cmd_generate(cfg, args);
        if (train->parsed()) return cmd_train(cfg, args);
        if (eval_cmd->parsed()) return cmd_eval(cfg, args);
        if (ood->parsed()) return cmd_ood(cfg, args);
        if (adapt->parsed()) return cmd_adapt(cfg, args);
        std::cerr << "error: no command given (see --help)\n";
        return 2;
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const data_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
}
