#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "raingraph/errors.hpp"
#include "raingraph/pipeline.hpp"
#include "raingraph/synth.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitNumerical = 4;

int run_stages(const std::string& config_path, const std::vector<raingraph::pipeline::Stage>& stages, bool force,
               std::optional<std::uint64_t> seed_override) {
    auto cfg = raingraph::pipeline::PipelineConfig::load(config_path);
    if (seed_override) cfg.seed = *seed_override;
    for (auto stage : stages) {
        const auto result = raingraph::pipeline::run_stage(stage, cfg, force);
        std::cout << raingraph::pipeline::stage_name(stage)
                  << (result.skipped ? ": skipped (cache hit)" : ": done") << ", " << result.outputs.size()
                  << " artifact(s)\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Long-range station-rainfall forecasting pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    bool force = false;
    std::optional<std::uint64_t> seed;

    std::vector<CLI::App*> stage_cmds;
    for (const auto& name : raingraph::pipeline::stage_names()) {
        auto* cmd = app.add_subcommand(name, "Run the " + name + " stage");
        cmd->add_option("--config", config_path, "Pipeline config JSON")->required();
        cmd->add_flag("--force", force, "Rerun even when artifacts match");
        cmd->add_option("--seed", seed, "Override the config seed");
        stage_cmds.push_back(cmd);
    }

    auto* all_cmd = app.add_subcommand("all", "Run every stage in order");
    all_cmd->add_option("--config", config_path, "Pipeline config JSON")->required();
    all_cmd->add_flag("--force", force, "Rerun even when artifacts match");
    all_cmd->add_option("--seed", seed, "Override the config seed");

    std::string synth_out = "data";
    std::uint64_t synth_seed = 42;
    int synth_months = 480;
    auto* synth_cmd = app.add_subcommand("synth", "Generate the bundled synthetic teleconnection dataset");
    synth_cmd->add_option("--out", synth_out, "Output directory");
    synth_cmd->add_option("--seed", synth_seed, "Generator seed");
    synth_cmd->add_option("--months", synth_months, "Series length in months");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (synth_cmd->parsed()) {
            raingraph::synth::SynthSpec spec;
            spec.seed = synth_seed;
            spec.n_months = synth_months;
            raingraph::synth::generate_dataset(synth_out, spec);
            std::cout << "synthetic dataset written to " << synth_out << "\n";
            return 0;
        }
        if (all_cmd->parsed()) {
            std::vector<raingraph::pipeline::Stage> stages;
            for (const auto& name : raingraph::pipeline::stage_names())
                stages.push_back(raingraph::pipeline::stage_from_name(name));
            return run_stages(config_path, stages, force, seed);
        }
        for (std::size_t i = 0; i < stage_cmds.size(); ++i) {
            if (stage_cmds[i]->parsed())
                return run_stages(config_path, {static_cast<raingraph::pipeline::Stage>(i)}, force, seed);
        }
        std::cerr << "no subcommand selected\n";
        return kExitConfig;
    } catch (const raingraph::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const raingraph::MissingArtifactError& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return kExitMissing;
    } catch (const raingraph::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}
