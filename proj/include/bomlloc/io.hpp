#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bomlloc/common.hpp"
#include "bomlloc/envsim.hpp"
#include "bomlloc/net.hpp"
#include "bomlloc/pacoh.hpp"
#include "bomlloc/prob.hpp"
#include "bomlloc/task.hpp"

namespace bomlloc {

// 17 significant digits: enough to round-trip any 64-bit real exactly.
inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Checkpoint {
    int format_version = 1;
    Architecture arch;
    std::vector<PriorParticle> particles;
    TemperatureConfig temperature;
    std::uint64_t seed = 0;
    long step_count = 0;
};

namespace detail {

inline nlohmann::json arch_to_json(const Architecture& arch) {
    return {{"input_dim", arch.input_dim},
            {"hidden_dims", arch.hidden_dims},
            {"output_dim", arch.output_dim}};
}

inline Architecture arch_from_json(const nlohmann::json& j) {
    Architecture arch;
    arch.input_dim = j.at("input_dim").get<int>();
    arch.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
    arch.output_dim = j.at("output_dim").get<int>();
    if (arch.input_dim < 1 || arch.output_dim != 2) {
        throw DataError("/arch: invalid dimensions");
    }
    for (int h : arch.hidden_dims) {
        if (h < 1) throw DataError("/arch/hidden_dims: nonpositive width");
    }
    return arch;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json j;
    j["format_version"] = ckpt.format_version;
    j["arch"] = detail::arch_to_json(ckpt.arch);
    j["particles"] = nlohmann::json::array();
    for (const auto& phi : ckpt.particles) {
        j["particles"].push_back({{"mu", phi.mu}, {"log_sigma", phi.log_sigma}});
    }
    j["temperature"] = {{"beta", ckpt.temperature.beta},
                        {"lambda", ckpt.temperature.lambda},
                        {"L", ckpt.temperature.mc_samples}};
    j["seed"] = ckpt.seed;
    j["step_count"] = ckpt.step_count;
    std::ofstream out(path);
    if (!out) throw DataError("save_checkpoint: cannot open " + path);
    out << j.dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("load_checkpoint: parse failure in " + path + ": " + e.what());
    }
    Checkpoint ckpt;
    try {
        ckpt.format_version = j.at("format_version").get<int>();
        if (ckpt.format_version != 1) {
            throw DataError("/format_version: incompatible checkpoint version " +
                            std::to_string(ckpt.format_version));
        }
        ckpt.arch = detail::arch_from_json(j.at("arch"));
        const std::size_t p = param_count(ckpt.arch);
        std::size_t idx = 0;
        for (const auto& pj : j.at("particles")) {
            PriorParticle phi;
            phi.mu = pj.at("mu").get<std::vector<double>>();
            phi.log_sigma = pj.at("log_sigma").get<std::vector<double>>();
            if (phi.mu.size() != p || phi.log_sigma.size() != p) {
                throw DataError("/particles/" + std::to_string(idx) +
                                ": vector length does not match architecture parameter count " +
                                std::to_string(p));
            }
            ckpt.particles.push_back(std::move(phi));
            ++idx;
        }
        const auto& t = j.at("temperature");
        ckpt.temperature.beta = t.at("beta").get<double>();
        ckpt.temperature.lambda = t.at("lambda").get<double>();
        ckpt.temperature.mc_samples = t.at("L").get<int>();
        ckpt.seed = j.at("seed").get<std::uint64_t>();
        ckpt.step_count = j.at("step_count").get<long>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("load_checkpoint: schema violation in " + path + ": " + e.what());
    }
    return ckpt;
}

// JSON-lines dataset: one object per sample, grouped by task id on read.
inline void write_dataset(const std::string& path, const std::vector<Task>& tasks) {
    std::ofstream out(path);
    if (!out) throw DataError("write_dataset: cannot open " + path);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        for (const auto& s : tasks[t].samples) {
            nlohmann::json j = {{"task", t},
                                {"domain", tasks[t].domain_id},
                                {"x", s.x},
                                {"y", {s.y[0], s.y[1]}}};
            out << j.dump() << "\n";
        }
    }
}

inline std::vector<Task> read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("read_dataset: cannot open " + path);
    std::vector<Task> tasks;
    std::map<long, std::size_t> index;  // task id -> position, in first-seen order
    std::string line;
    long line_no = 0;
    std::size_t x_len = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("read_dataset: line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            const long task_id = j.at("task").get<long>();
            Sample s;
            s.x = j.at("x").get<std::vector<double>>();
            const auto y = j.at("y").get<std::vector<double>>();
            if (y.size() != 2) {
                throw DataError("read_dataset: line " + std::to_string(line_no) +
                                ": y must have 2 entries");
            }
            s.y = {y[0], y[1]};
            if (x_len == 0) x_len = s.x.size();
            if (s.x.size() != x_len) {
                throw DataError("read_dataset: line " + std::to_string(line_no) +
                                ": ragged x length " + std::to_string(s.x.size()) +
                                " (expected " + std::to_string(x_len) + ")");
            }
            auto it = index.find(task_id);
            if (it == index.end()) {
                it = index.emplace(task_id, tasks.size()).first;
                Task t;
                t.domain_id = j.at("domain").get<int>();
                tasks.push_back(std::move(t));
            }
            tasks[it->second].samples.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("read_dataset: line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return tasks;
}

// Suite descriptor JSON: environments plus the stored normalization.
inline void save_suite(const std::string& path, const EnvironmentSuite& suite) {
    nlohmann::json j;
    j["environments"] = nlohmann::json::array();
    for (const auto& env : suite.environments) {
        nlohmann::json ej;
        ej["room"] = {env.room_w, env.room_h};
        ej["anchors"] = nlohmann::json::array();
        for (const auto& a : env.anchors) ej["anchors"].push_back({a[0], a[1]});
        ej["path_loss_exponent"] = env.path_loss_exponent;
        ej["shadowing_sigma_db"] = env.shadowing_sigma_db;
        ej["n_multipath"] = env.n_multipath;
        ej["multipath_amp_db"] = env.multipath_amp_db;
        ej["bins_per_anchor"] = env.bins_per_anchor;
        ej["domain_seed"] = env.domain_seed;
        ej["los"] = env.los;
        j["environments"].push_back(std::move(ej));
    }
    j["normalization"] = {{"mean", suite.normalization.mean}, {"std", suite.normalization.std}};
    std::ofstream out(path);
    if (!out) throw DataError("save_suite: cannot open " + path);
    out << j.dump(2) << "\n";
}

inline EnvironmentSuite load_suite(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_suite: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("load_suite: parse failure in " + path + ": " + e.what());
    }
    EnvironmentSuite suite;
    try {
        for (const auto& ej : j.at("environments")) {
            EnvironmentSpec env;
            env.room_w = ej.at("room")[0].get<double>();
            env.room_h = ej.at("room")[1].get<double>();
            env.anchors.clear();
            for (const auto& a : ej.at("anchors")) {
                env.anchors.push_back({a[0].get<double>(), a[1].get<double>()});
            }
            env.path_loss_exponent = ej.at("path_loss_exponent").get<double>();
            env.shadowing_sigma_db = ej.at("shadowing_sigma_db").get<double>();
            env.n_multipath = ej.at("n_multipath").get<int>();
            env.multipath_amp_db = ej.at("multipath_amp_db").get<double>();
            env.bins_per_anchor = ej.at("bins_per_anchor").get<int>();
            env.domain_seed = ej.at("domain_seed").get<std::uint64_t>();
            env.los = ej.at("los").get<bool>();
            suite.environments.push_back(std::move(env));
        }
        suite.normalization.mean = j.at("normalization").at("mean").get<std::vector<double>>();
        suite.normalization.std = j.at("normalization").at("std").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("load_suite: schema violation in " + path + ": " + e.what());
    }
    return suite;
}

// Metrics CSV with a fixed, documented header. One row per checkpointed step.
class MetricsWriter {
public:
    static constexpr const char* kHeader =
        "method,rotation,phase,step,mean_error_m,std_error_m,mean_uncertainty_m,"
        "bound_emp_term,bound_kl_term,wall_ms";

    explicit MetricsWriter(const std::string& path) : out_(path) {
        if (!out_) throw DataError("MetricsWriter: cannot open " + path);
        out_ << kHeader << "\n";
    }

    void row(const std::string& method, int rotation, const std::string& phase, int step,
             double mean_error, double std_error, double mean_uncertainty, double bound_emp,
             double bound_kl, long wall_ms) {
        out_ << method << ',' << rotation << ',' << phase << ',' << step << ','
             << fmt_double(mean_error) << ',' << fmt_double(std_error) << ','
             << fmt_double(mean_uncertainty) << ',' << fmt_double(bound_emp) << ','
             << fmt_double(bound_kl) << ',' << wall_ms << "\n";
    }

    void flush() { out_.flush(); }

private:
    std::ofstream out_;
};

// key=value configuration files; '#' starts a comment.
inline std::map<std::string, std::string> read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("read_config: cannot open " + path);
    std::map<std::string, std::string> cfg;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw DataError("read_config: line " + std::to_string(line_no) + ": expected key=value");
        }
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        cfg[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return cfg;
}

inline void write_config(const std::string& path,
                         const std::map<std::string, std::string>& cfg) {
    std::ofstream out(path);
    if (!out) throw DataError("write_config: cannot open " + path);
    for (const auto& [k, v] : cfg) out << k << "=" << v << "\n";
}

}  // namespace bomlloc
