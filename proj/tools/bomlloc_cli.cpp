// Command-line front end: synthetic data generation, meta-training,
// fine-tuning, evaluation, baselines, and the full leave-one-environment-out
// experiment.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bomlloc/baselines.hpp"
#include "bomlloc/envsim.hpp"
#include "bomlloc/experiment.hpp"
#include "bomlloc/io.hpp"
#include "bomlloc/pipeline.hpp"

namespace {

using namespace bomlloc;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// All tunables in one place so the resolved-config record can list every
// effective value.
struct Options {
    std::uint64_t seed = 0;
    std::string out = "out";
    std::string config_file;
    int particles = 5;    // K
    int mc_samples = 5;   // L
    double lr = 0.002;    // eta
    int n_networks = 10;  // N
    double beta = 0.0;    // 0 -> default: task sample count
    double lambda = 0.0;  // 0 -> default: total task budget
    int iters = 500;
    int n_tasks = 100;
    int n_tasks_per_iter = 5;
    int finetune_steps = 200;
    int checkpoint_every = 10;
    double clip_score = 100.0;
    // data generation
    int envs = 5;
    bool nlos = false;
    int task_size = 50;
    int finetune_size = 30;
    int test_size = 50;
    int width = 32;
    // misc
    std::string method = "maml";
    std::string data_path;
    std::string suite_path;
    std::string checkpoint_path;
    int knn_k = 3;
    bool wall_time = false;
};

std::map<std::string, std::string> resolved(const Options& o) {
    std::map<std::string, std::string> m;
    m["seed"] = std::to_string(o.seed);
    m["out"] = o.out;
    m["particles"] = std::to_string(o.particles);
    m["mc_samples"] = std::to_string(o.mc_samples);
    m["lr"] = fmt_double(o.lr);
    m["n_networks"] = std::to_string(o.n_networks);
    m["beta"] = fmt_double(o.beta);
    m["lambda"] = fmt_double(o.lambda);
    m["iters"] = std::to_string(o.iters);
    m["n_tasks"] = std::to_string(o.n_tasks);
    m["n_tasks_per_iter"] = std::to_string(o.n_tasks_per_iter);
    m["finetune_steps"] = std::to_string(o.finetune_steps);
    m["checkpoint_every"] = std::to_string(o.checkpoint_every);
    m["clip_score"] = fmt_double(o.clip_score);
    m["envs"] = std::to_string(o.envs);
    m["nlos"] = o.nlos ? "1" : "0";
    m["task_size"] = std::to_string(o.task_size);
    m["finetune_size"] = std::to_string(o.finetune_size);
    m["test_size"] = std::to_string(o.test_size);
    m["width"] = std::to_string(o.width);
    m["method"] = o.method;
    m["knn_k"] = std::to_string(o.knn_k);
    m["wall_time"] = o.wall_time ? "1" : "0";
    return m;
}

void add_shared_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--seed", o.seed, "Master RNG seed");
    cmd->add_option("--out", o.out, "Output path or directory");
    cmd->add_option("--config", o.config_file,
                    "key=value config file; command-line flags take precedence");
    cmd->add_option("--particles", o.particles, "Hyper-posterior particle count K")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--mc-samples", o.mc_samples, "Monte-Carlo samples L")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--lr", o.lr, "SVGD step size")->check(CLI::PositiveNumber);
    cmd->add_option("--n-networks", o.n_networks, "Posterior networks N per particle")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--beta", o.beta, "Per-task inverse temperature (0 = task sample count)");
    cmd->add_option("--lambda", o.lambda, "Hyper-prior inverse temperature (0 = task budget)");
    cmd->add_option("--iters", o.iters, "Meta-training iterations");
    cmd->add_option("--n-tasks", o.n_tasks, "Meta-training task budget");
    cmd->add_option("--n-tasks-per-iter", o.n_tasks_per_iter, "Tasks sampled per iteration");
    cmd->add_option("--finetune-steps", o.finetune_steps, "Fine-tuning SVGD steps");
    cmd->add_option("--checkpoint-every", o.checkpoint_every, "Fine-tune evaluation cadence");
    cmd->add_option("--clip-score", o.clip_score, "Score norm clip (0 disables)");
    cmd->add_option("--width", o.width, "Hidden layer width")->check(CLI::PositiveNumber);
    cmd->add_flag("--wall-time", o.wall_time,
                  "Record real wall-clock ms in metrics (breaks byte-identical reruns)");
}

// Config file fills in only flags the user did not pass explicitly.
void apply_config_file(CLI::App* cmd, Options& o) {
    if (o.config_file.empty()) return;
    const auto cfg = read_config(o.config_file);
    auto set_if_unset = [&](const char* flag, const char* key, auto& target) {
        const auto* opt = cmd->get_option_no_throw(flag);
        const auto it = cfg.find(key);
        if (it == cfg.end()) return;
        if (opt != nullptr && opt->count() > 0) return;
        std::istringstream ss(it->second);
        ss >> target;
        if (ss.fail()) throw DataError("config: cannot parse " + std::string(key));
    };
    set_if_unset("--seed", "seed", o.seed);
    set_if_unset("--particles", "particles", o.particles);
    set_if_unset("--mc-samples", "mc_samples", o.mc_samples);
    set_if_unset("--lr", "lr", o.lr);
    set_if_unset("--n-networks", "n_networks", o.n_networks);
    set_if_unset("--beta", "beta", o.beta);
    set_if_unset("--lambda", "lambda", o.lambda);
    set_if_unset("--iters", "iters", o.iters);
    set_if_unset("--n-tasks", "n_tasks", o.n_tasks);
    set_if_unset("--n-tasks-per-iter", "n_tasks_per_iter", o.n_tasks_per_iter);
    set_if_unset("--finetune-steps", "finetune_steps", o.finetune_steps);
    set_if_unset("--checkpoint-every", "checkpoint_every", o.checkpoint_every);
    set_if_unset("--clip-score", "clip_score", o.clip_score);
    set_if_unset("--width", "width", o.width);
}

MetaConfig meta_config(const Options& o, int task_sample_count) {
    MetaConfig cfg;
    cfg.n_tasks_per_iter = o.n_tasks_per_iter;
    cfg.max_iters = o.iters;
    cfg.eta = o.lr;
    cfg.particles = o.particles;
    cfg.mc_samples = o.mc_samples;
    cfg.beta = o.beta > 0.0 ? o.beta : static_cast<double>(task_sample_count);
    cfg.lambda = o.lambda > 0.0 ? o.lambda : static_cast<double>(o.n_tasks);
    cfg.seed = o.seed;
    cfg.clip_score = o.clip_score;
    cfg.finetune_steps = o.finetune_steps;
    return cfg;
}

Architecture arch_for(int input_dim, int width) {
    Architecture arch;
    arch.input_dim = input_dim;
    arch.hidden_dims = {width, width, width, width};
    return arch;
}

void write_resolved(const Options& o, const std::string& dir) {
    std::filesystem::create_directories(dir);
    write_config(dir + "/resolved.cfg", resolved(o));
}

int cmd_gen_data(Options& o) {
    namespace fs = std::filesystem;
    fs::create_directories(o.out);
    const auto suite = make_suite(o.envs, o.seed, !o.nlos);
    save_suite(o.out + "/suite.json", suite);
    Rng rng = Rng(o.seed).split(0xDA7A);
    std::vector<Task> tasks;
    for (int t = 0; t < o.n_tasks; ++t) {
        const std::size_t env = static_cast<std::size_t>(t) % suite.environments.size();
        tasks.push_back(sample_task(suite, env, o.task_size, rng));
    }
    write_dataset(o.out + "/tasks.jsonl", tasks);
    write_resolved(o, o.out);
    std::cout << "wrote " << o.out << "/suite.json and " << tasks.size() << " tasks\n";
    return 0;
}

int cmd_meta_train(Options& o) {
    const auto tasks = read_dataset(o.data_path);
    if (tasks.empty()) throw DataError("meta-train: no tasks in " + o.data_path);
    const int input_dim = static_cast<int>(tasks.front().samples.front().x.size());
    const Architecture arch = arch_for(input_dim, o.width);
    o.n_tasks = static_cast<int>(tasks.size());
    const MetaConfig cfg = meta_config(o, static_cast<int>(tasks.front().size()));

    const auto set = meta_train(arch, cfg, pool_source(tasks));
    namespace fs = std::filesystem;
    fs::create_directories(o.out);
    Checkpoint ckpt;
    ckpt.arch = arch;
    ckpt.particles = set.particles;
    ckpt.temperature = {cfg.beta, cfg.lambda, cfg.mc_samples, false};
    ckpt.seed = o.seed;
    ckpt.step_count = set.step_count;
    save_checkpoint(o.out + "/checkpoint.json", ckpt);
    write_resolved(o, o.out);
    std::cout << "meta-trained " << cfg.particles << " particles for " << set.step_count
              << " steps -> " << o.out << "/checkpoint.json\n";
    return 0;
}

int cmd_fine_tune(Options& o) {
    auto ckpt = load_checkpoint(o.checkpoint_path);
    const auto tasks = read_dataset(o.data_path);
    if (tasks.empty()) throw DataError("fine-tune: no adaptation data in " + o.data_path);
    const Task& s0 = tasks.front();

    MetaConfig cfg = meta_config(o, static_cast<int>(s0.size()));
    cfg.finetune_eta = o.lr;
    cfg.finetune_clip = o.clip_score;
    if (o.beta <= 0.0) cfg.beta = ckpt.temperature.beta;
    if (o.lambda <= 0.0) cfg.lambda = ckpt.temperature.lambda;
    ParticleSet set;
    set.particles = ckpt.particles;
    set.step_count = ckpt.step_count;
    Rng ft_rng = Rng(o.seed).split(4);
    const auto tuned = fine_tune(ckpt.arch, set, s0, cfg, cfg.finetune_steps, ft_rng);

    namespace fs = std::filesystem;
    fs::create_directories(o.out);
    Checkpoint out_ckpt = ckpt;
    out_ckpt.particles = tuned.particles;
    out_ckpt.step_count = tuned.step_count;
    out_ckpt.temperature = {cfg.beta, cfg.lambda, cfg.mc_samples, true};
    out_ckpt.seed = o.seed;
    save_checkpoint(o.out + "/checkpoint.json", out_ckpt);
    write_resolved(o, o.out);
    std::cout << "fine-tuned for " << cfg.finetune_steps << " steps -> " << o.out
              << "/checkpoint.json\n";
    return 0;
}

int cmd_evaluate(Options& o) {
    const auto ckpt = load_checkpoint(o.checkpoint_path);
    const auto tasks = read_dataset(o.data_path);
    if (tasks.empty()) throw DataError("evaluate: no test data in " + o.data_path);
    ParticleSet set;
    set.particles = ckpt.particles;
    const auto report = evaluate(ckpt.arch, set, tasks.front(), o.n_networks, o.seed);
    std::cout << "n_networks " << report.n_networks << "\n";
    std::cout << "mean_error_m " << fmt_double(report.mean_error) << "\n";
    std::cout << "std_error_m " << fmt_double(report.std_error) << "\n";
    std::cout << "mean_uncertainty_m " << fmt_double(report.mean_uncertainty) << "\n";
    return 0;
}

ExperimentConfig experiment_config(const Options& o) {
    ExperimentConfig cfg;
    cfg.meta = meta_config(o, o.task_size);
    cfg.maml.seed = o.seed;
    cfg.maml.meta_iters = o.iters;
    cfg.maml.tasks_per_iter = o.n_tasks_per_iter;
    cfg.n_envs = o.envs;
    cfg.los = !o.nlos;
    cfg.n_tasks_total = o.n_tasks;
    cfg.train_task_size = o.task_size;
    cfg.finetune_size = o.finetune_size;
    cfg.test_size = o.test_size;
    cfg.n_networks = o.n_networks;
    cfg.checkpoint_every = o.checkpoint_every;
    cfg.suite_seed = o.seed;
    cfg.knn_k = o.knn_k;
    cfg.record_wall_time = o.wall_time;
    return cfg;
}

int cmd_baseline(Options& o) {
    if (o.method != "maml" && o.method != "randinit" && o.method != "knn") {
        throw CLI::ValidationError("--method must be maml, randinit, or knn");
    }
    ExperimentConfig cfg = experiment_config(o);
    cfg.methods = {o.method};
    const auto suite = make_suite(cfg.n_envs, cfg.suite_seed, cfg.los);
    const Architecture arch = arch_for(suite.environments.front().feature_dim(), o.width);
    run_experiment(arch, cfg, suite, o.out);
    write_resolved(o, o.out);
    std::cout << "baseline " << o.method << " -> " << o.out << "/metrics.csv\n";
    return 0;
}

int cmd_experiment(Options& o) {
    const ExperimentConfig cfg = experiment_config(o);
    std::filesystem::create_directories(o.out);
    const auto suite = make_suite(cfg.n_envs, cfg.suite_seed, cfg.los);
    save_suite(o.out + "/suite.json", suite);
    const Architecture arch = arch_for(suite.environments.front().feature_dim(), o.width);
    run_experiment(arch, cfg, suite, o.out);
    write_resolved(o, o.out);
    std::cout << "experiment complete -> " << o.out << "/metrics.csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BOML-Loc: Bayesian meta-learning for indoor localization"};
    app.require_subcommand(1);
    Options o;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic environment suite and tasks");
    add_shared_flags(gen, o);
    gen->add_option("--envs", o.envs, "Number of environments")->check(CLI::PositiveNumber);
    gen->add_flag("--nlos", o.nlos, "Use the non-line-of-sight regime");
    gen->add_option("--task-size", o.task_size, "Samples per task");

    auto* mt = app.add_subcommand("meta-train", "Meta-train hyper-posterior particles");
    add_shared_flags(mt, o);
    mt->add_option("--data", o.data_path, "Training tasks (JSON lines)")->required();

    auto* ft = app.add_subcommand("fine-tune", "Fine-tune particles on an adaptation set");
    add_shared_flags(ft, o);
    ft->add_option("--checkpoint", o.checkpoint_path, "Input checkpoint")->required();
    ft->add_option("--data", o.data_path, "Adaptation task S0 (JSON lines)")->required();

    auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a test task");
    add_shared_flags(ev, o);
    ev->add_option("--checkpoint", o.checkpoint_path, "Input checkpoint")->required();
    ev->add_option("--data", o.data_path, "Test task (JSON lines)")->required();

    auto* bl = app.add_subcommand("baseline", "Run a comparison method");
    add_shared_flags(bl, o);
    bl->add_option("--method", o.method, "maml | randinit | knn")->required();
    bl->add_option("--envs", o.envs, "Number of environments");
    bl->add_flag("--nlos", o.nlos, "Use the non-line-of-sight regime");
    bl->add_option("--knn-k", o.knn_k, "Neighbors for KNN");
    bl->add_option("--task-size", o.task_size, "Samples per training task");
    bl->add_option("--finetune-size", o.finetune_size, "Samples in S0");
    bl->add_option("--test-size", o.test_size, "Samples in S_test");

    auto* ex = app.add_subcommand("experiment", "Full leave-one-environment-out experiment");
    add_shared_flags(ex, o);
    ex->add_option("--envs", o.envs, "Number of environments");
    ex->add_flag("--nlos", o.nlos, "Use the non-line-of-sight regime");
    ex->add_option("--knn-k", o.knn_k, "Neighbors for KNN");
    ex->add_option("--task-size", o.task_size, "Samples per training task");
    ex->add_option("--finetune-size", o.finetune_size, "Samples in S0");
    ex->add_option("--test-size", o.test_size, "Samples in S_test");

    try {
        app.parse(argc, argv);
        CLI::App* cmd = app.get_subcommands().front();
        apply_config_file(cmd, o);
        if (cmd == gen) return cmd_gen_data(o);
        if (cmd == mt) return cmd_meta_train(o);
        if (cmd == ft) return cmd_fine_tune(o);
        if (cmd == ev) return cmd_evaluate(o);
        if (cmd == bl) return cmd_baseline(o);
        if (cmd == ex) return cmd_experiment(o);
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    } catch (const bomlloc::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const bomlloc::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const bomlloc::InputError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
