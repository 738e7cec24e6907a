#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "fedgmm/datagen.hpp"
#include "fedgmm/errors.hpp"
#include "fedgmm/federation.hpp"

// Experiment configuration: one master seed plus the data and training
// sections, loadable from a sectioned key=value text file and overridable by
// command-line flags. Unknown keys are rejected up front; a dumped config
// reloads to an equivalent run.

namespace fedgmm {

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string out = "out";
    int workers = 1;
    SyntheticSpec data;
    FederationConfig train;
    int adapt_steps = 20;

    // Propagate the master seed and worker count into the sections and check
    // every field. Call once after file + flag resolution.
    void finalize() {
        data.seed = seed;
        train.seed = seed;
        train.workers = workers;
        if (workers < 1) throw config_error("workers must be >= 1");
        if (adapt_steps < 0) throw config_error("adapt steps must be >= 0");
        data.validate();
        train.validate();
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, int line_no) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw config_error("line " + std::to_string(line_no) + ": expected true/false, got '" + v +
                       "'");
}

inline double config_double(const std::string& v, int line_no) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
        throw config_error("line " + std::to_string(line_no) + ": bad number '" + v + "'");
    return x;
}

inline long config_int(const std::string& v, int line_no) {
    char* end = nullptr;
    const long x = std::strtol(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
        throw config_error("line " + std::to_string(line_no) + ": bad integer '" + v + "'");
    return x;
}

}  // namespace detail

// Apply one key (already section-qualified, e.g. "train.lr") to the config.
inline void config_set(ExperimentConfig& cfg, const std::string& key, const std::string& value,
                       int line_no = 0) {
    using detail::config_double;
    using detail::config_int;
    using detail::parse_bool;
    if (key == "seed") cfg.seed = static_cast<std::uint64_t>(config_int(value, line_no));
    else if (key == "out") cfg.out = value;
    else if (key == "workers") cfg.workers = static_cast<int>(config_int(value, line_no));
    else if (key == "data.family") cfg.data.family = family_from_string(value);
    else if (key == "data.M") cfg.data.M = static_cast<int>(config_int(value, line_no));
    else if (key == "data.d") cfg.data.d = static_cast<int>(config_int(value, line_no));
    else if (key == "data.C") cfg.data.C = static_cast<int>(config_int(value, line_no));
    else if (key == "data.n") cfg.data.n_per_client = static_cast<int>(config_int(value, line_no));
    else if (key == "data.alpha") cfg.data.alpha = config_double(value, line_no);
    else if (key == "data.separation") cfg.data.separation = config_double(value, line_no);
    else if (key == "data.mean_offset") cfg.data.mean_offset = config_double(value, line_no);
    else if (key == "train.mode") cfg.train.mode = mode_from_string(value);
    else if (key == "train.sigma") cfg.train.cov = cov_from_string(value);
    else if (key == "train.sigma_correction") cfg.train.sigma_correction = parse_bool(value, line_no);
    else if (key == "train.M1") cfg.train.M1 = static_cast<int>(config_int(value, line_no));
    else if (key == "train.M2") cfg.train.M2 = static_cast<int>(config_int(value, line_no));
    else if (key == "train.rounds") cfg.train.rounds = static_cast<int>(config_int(value, line_no));
    else if (key == "train.lr") cfg.train.lr = config_double(value, line_no);
    else if (key == "train.epochs") cfg.train.epochs = static_cast<int>(config_int(value, line_no));
    else if (key == "train.batch") cfg.train.batch = static_cast<int>(config_int(value, line_no));
    else if (key == "train.participation") cfg.train.participation = config_double(value, line_no);
    else if (key == "train.eps_floor") cfg.train.eps_floor = config_double(value, line_no);
    else if (key == "train.starve_threshold")
        cfg.train.starve_threshold = config_double(value, line_no);
    else if (key == "train.init") cfg.train.init = value;
    else if (key == "adapt.steps") cfg.adapt_steps = static_cast<int>(config_int(value, line_no));
    else
        throw config_error("unknown config key '" + key + "'" +
                           (line_no > 0 ? " (line " + std::to_string(line_no) + ")" : ""));
}

inline void parse_config_text(ExperimentConfig& cfg, const std::string& text,
                              const std::string& source = "config") {
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw config_error(source + " line " + std::to_string(line_no) +
                                   ": malformed section header");
            section = detail::trim(t.substr(1, t.size() - 2));
            if (section != "data" && section != "train" && section != "adapt")
                throw config_error(source + " line " + std::to_string(line_no) +
                                   ": unknown section '" + section + "'");
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw config_error(source + " line " + std::to_string(line_no) +
                               ": expected key = value");
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string value = detail::trim(t.substr(eq + 1));
        if (key.empty())
            throw config_error(source + " line " + std::to_string(line_no) + ": empty key");
        config_set(cfg, section.empty() ? key : section + "." + key, value, line_no);
    }
}

inline void load_config_file(ExperimentConfig& cfg, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw config_error("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    parse_config_text(cfg, buf.str(), path);
}

// Canonical form; parsing the dump reproduces the config exactly.
inline std::string dump_config(const ExperimentConfig& cfg) {
    std::ostringstream f;
    f << "seed = " << cfg.seed << '\n'
      << "out = " << cfg.out << '\n'
      << "workers = " << cfg.workers << '\n'
      << '\n'
      << "[data]\n"
      << "family = " << family_to_string(cfg.data.family) << '\n'
      << "M = " << cfg.data.M << '\n'
      << "d = " << cfg.data.d << '\n'
      << "C = " << cfg.data.C << '\n'
      << "n = " << cfg.data.n_per_client << '\n'
      << "alpha = " << detail::format_double(cfg.data.alpha) << '\n'
      << "separation = " << detail::format_double(cfg.data.separation) << '\n'
      << "mean_offset = " << detail::format_double(cfg.data.mean_offset) << '\n'
      << '\n'
      << "[train]\n"
      << "mode = " << mode_to_string(cfg.train.mode) << '\n'
      << "sigma = " << cov_to_string(cfg.train.cov) << '\n'
      << "sigma_correction = " << (cfg.train.sigma_correction ? "true" : "false") << '\n'
      << "M1 = " << cfg.train.M1 << '\n'
      << "M2 = " << cfg.train.M2 << '\n'
      << "rounds = " << cfg.train.rounds << '\n'
      << "lr = " << detail::format_double(cfg.train.lr) << '\n'
      << "epochs = " << cfg.train.epochs << '\n'
      << "batch = " << cfg.train.batch << '\n'
      << "participation = " << detail::format_double(cfg.train.participation) << '\n'
      << "eps_floor = " << detail::format_double(cfg.train.eps_floor) << '\n'
      << "starve_threshold = " << detail::format_double(cfg.train.starve_threshold) << '\n'
      << "init = " << cfg.train.init << '\n'
      << '\n'
      << "[adapt]\n"
      << "steps = " << cfg.adapt_steps << '\n';
    return f.str();
}

}  // namespace fedgmm
