// scott: command-line front end for training, evaluation and change-point
// simulation. Exit codes: 0 success, 2 usage or configuration error,
// 3 runtime failure.

#include "scott/commands.hpp"

#include "CLI11.hpp"

#include <functional>
#include <iostream>
#include <map>

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string dataset;
    std::optional<std::size_t> lambda;
    std::optional<std::size_t> beta;
    std::optional<double> threshold;
    std::optional<std::size_t> n_views;
    bool oversample = false;
    std::string checkpoint;
    bool verbose = false;
};

// Flags win over the config file.
scott::ExperimentConfig build_config(const Flags& f, const std::string& command) {
    scott::ExperimentConfig c = f.config.empty() ? scott::ExperimentConfig{} : scott::load_config(f.config);
    if (f.seed) c.seed = f.seed;
    if (!f.out_dir.empty()) c.out_dir = f.out_dir;
    if (!f.dataset.empty()) {
        if (command == "cpd-simulate") c.stream = f.dataset;
        else c.dataset.path = f.dataset;
    }
    if (f.lambda) c.window.lambda = *f.lambda;
    if (f.beta) c.window.beta = *f.beta;
    if (f.threshold) c.window.threshold = *f.threshold;
    if (f.lambda || f.beta || f.threshold) c.window_given = true;
    if (f.n_views) c.train.views = *f.n_views;
    if (f.oversample) c.oversample = true;
    if (!f.checkpoint.empty()) c.checkpoint = f.checkpoint;
    c.verbose = f.verbose;
    return c;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Supervised contrastive temporal transformer for time series"};
    app.require_subcommand(1);
    Flags flags;

    using Command = std::function<void(scott::ExperimentConfig, std::ostream&)>;
    const std::map<std::string, std::pair<std::string, Command>> commands = {
        {"ingest", {"Load and validate a dataset, print a summary", scott::cmd_ingest}},
        {"augment-study", {"Accuracy of each augmentation per dataset", scott::cmd_augment_study}},
        {"train", {"Train encoder and classifier, write checkpoint, report and metrics", scott::cmd_train}},
        {"eval", {"Evaluate a checkpoint on the test split", scott::cmd_eval}},
        {"cpd-simulate",
         {"Replay a stream through a change-point model",
          [](scott::ExperimentConfig c, std::ostream& log) { scott::cmd_cpd_simulate(std::move(c), log); }}},
        {"early-detect", {"Metrics for change onsets shifted 0..max_shift steps earlier", scott::cmd_early_detect}},
        {"loss-bench", {"Time per-view against flat contrastive loss", scott::cmd_loss_bench}},
    };

    for (const auto& [name, entry] : commands) {
        CLI::App* sub = app.add_subcommand(name, entry.first);
        sub->add_option("--config", flags.config, "JSON experiment config");
        sub->add_option("--seed", flags.seed, "Random seed (required here or in the config)");
        sub->add_option("--out-dir", flags.out_dir, "Output directory");
        sub->add_option("--dataset", flags.dataset, "Dataset path (stream file or '-' for cpd-simulate)");
        sub->add_option("--lambda", flags.lambda, "Window length");
        sub->add_option("--beta", flags.beta, "Protected tail length");
        sub->add_option("--threshold", flags.threshold, "Drop threshold");
        sub->add_option("--n-views", flags.n_views, "Views per instance");
        sub->add_flag("--oversample", flags.oversample, "Balance classes by augmented oversampling");
        sub->add_option("--checkpoint", flags.checkpoint, "Checkpoint file (eval, cpd-simulate)");
        sub->add_flag("-v,--verbose", flags.verbose, "Log per-epoch losses to stderr");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        commands.at(name).second(build_config(flags, name), std::cout);
    } catch (const scott::ConfigError& e) {
        std::cerr << "scott " << name << ": " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "scott " << name << ": " << e.what() << '\n';
        return 3;
    }
    return 0;
}
