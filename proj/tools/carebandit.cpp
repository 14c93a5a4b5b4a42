#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "carebandit/config.hpp"
#include "carebandit/error.hpp"
#include "carebandit/pipeline.hpp"
#include "carebandit/text.hpp"

namespace {

struct Options {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    bool force = false;
    std::string manifest;
};

carebandit::ExperimentConfig resolve(const Options& opt) {
    carebandit::ExperimentConfig cfg;
    if (!opt.config_path.empty()) cfg = carebandit::parse_config(carebandit::text::read_file(opt.config_path));
    for (const auto& o : opt.overrides) carebandit::apply_override(cfg, o);
    if (opt.seed) cfg.seed = *opt.seed;
    cfg.validate();
    return cfg;
}

int run_stage(const Options& opt, carebandit::Stage last) {
    carebandit::Pipeline pipeline(resolve(opt), opt.out_dir, opt.force);
    pipeline.run_through(last);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Offline contextual-bandit replay for multi-intervention care planning"};
    app.set_version_flag("--version", std::string(carebandit::kToolkitVersion));
    app.require_subcommand(1);

    Options opt;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", opt.config_path, "key = value experiment config file")->check(CLI::ExistingFile);
        sub->add_option("--set", opt.overrides, "override one setting, e.g. replay.horizon=500 (repeatable)");
        sub->add_option("--seed", opt.seed, "master seed");
        sub->add_option("-o,--out-dir", opt.out_dir, "output directory")->capture_default_str();
        sub->add_flag("-f,--force", opt.force, "rerun stages even when up to date");
    };

    struct Command {
        const char* name;
        const char* help;
        carebandit::Stage stage;
    };
    const Command commands[] = {
        {"synth", "generate the synthetic cohort and its ground truth", carebandit::Stage::Synth},
        {"fit", "select and fit the reward oracle (runs synth if needed)", carebandit::Stage::Fit},
        {"impute", "build the full reward table (runs earlier stages if needed)", carebandit::Stage::Impute},
        {"replay", "run the bandit replays (runs earlier stages if needed)", carebandit::Stage::Replay},
        {"run", "run the whole pipeline including the report", carebandit::Stage::Report},
    };
    std::vector<std::pair<CLI::App*, carebandit::Stage>> subs;
    for (const auto& c : commands) {
        auto* sub = app.add_subcommand(c.name, c.help);
        add_common(sub);
        subs.emplace_back(sub, c.stage);
    }
    auto* report = app.add_subcommand("report", "render figures and the summary CSV");
    add_common(report);
    report->add_option("-m,--manifest", opt.manifest, "regenerate the report for an existing manifest");

    CLI11_PARSE(app, argc, argv);

    try {
        if (report->parsed()) {
            if (!opt.manifest.empty()) {
                carebandit::report_from_manifest(opt.manifest);
                return 0;
            }
            return run_stage(opt, carebandit::Stage::Report);
        }
        for (const auto& [sub, stage] : subs)
            if (sub->parsed()) return run_stage(opt, stage);
    } catch (const carebandit::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const carebandit::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
