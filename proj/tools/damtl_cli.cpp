// damtl: run, validate and summarize experiments.

#include "damtl/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace
{
    constexpr int kOk = 0;
    constexpr int kConfigError = 2;
    constexpr int kRuntimeError = 3;

    struct Overrides
    {
        std::string seeds;
        std::string out;
        std::optional<double> horizon;
        std::optional<double> cadence;
    };

    damtl::ExperimentSpec load(const std::string &path, const Overrides &o)
    {
        auto spec = damtl::load_experiment_spec(path);
        if (!o.seeds.empty())
        {
            spec.seeds = damtl::parse_seed_list(o.seeds);
        }
        if (!o.out.empty())
        {
            spec.out_dir = o.out;
        }
        if (o.horizon)
        {
            if (!(*o.horizon > 0.0))
            {
                throw damtl::Error(damtl::ErrorCode::ConfigError, "--horizon must be positive");
            }
            spec.run.horizon = *o.horizon;
        }
        if (o.cadence)
        {
            if (!(*o.cadence > 0.0))
            {
                throw damtl::Error(damtl::ErrorCode::ConfigError, "--cadence must be positive");
            }
            spec.run.cadence = *o.cadence;
        }
        damtl::check_inputs(spec);
        return spec;
    }

    int report(const damtl::Error &e)
    {
        std::cerr << "damtl: " << e.what() << '\n';
        return e.code() == damtl::ErrorCode::ConfigError ? kConfigError : kRuntimeError;
    }
} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Distributed asynchronous multi-task learning simulator"};
    app.require_subcommand(1);

    Overrides o;
    auto add_overrides = [&](CLI::App *cmd) {
        cmd->add_option("--seeds", o.seeds, "Seed list, e.g. 1,2,3 or 1-5");
        cmd->add_option("--out", o.out, "Output directory");
        cmd->add_option("--horizon", o.horizon, "Virtual-time horizon");
        cmd->add_option("--cadence", o.cadence, "Metric cadence in virtual time");
    };

    std::string spec_path;
    auto *run_cmd = app.add_subcommand("run", "Run every (variant, seed) pair of an experiment spec");
    run_cmd->add_option("spec", spec_path, "Experiment spec file")->required();
    add_overrides(run_cmd);

    auto *validate_cmd = app.add_subcommand("validate", "Parse a spec and check its inputs without running");
    validate_cmd->add_option("spec", spec_path, "Experiment spec file")->required();
    add_overrides(validate_cmd);

    std::string dir;
    auto *summarize_cmd = app.add_subcommand("summarize", "Rebuild aggregate outputs from a results directory");
    summarize_cmd->add_option("dir", dir, "Results directory")->required();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    damtl::ExperimentSpec spec;
    if (*run_cmd || *validate_cmd)
    {
        try
        {
            spec = load(spec_path, o);
            // Building the first problem catches bad data files and topologies up front.
            (void)damtl::build_problem(spec, spec.seeds.front());
        }
        catch (const damtl::Error &e)
        {
            std::cerr << "damtl: " << e.what() << '\n';
            return kConfigError;
        }
        catch (const std::exception &e)
        {
            std::cerr << "damtl: " << e.what() << '\n';
            return kConfigError;
        }
    }

    try
    {
        if (*validate_cmd)
        {
            std::cout << spec_path << ": ok (" << damtl::to_string(spec.kind) << ", " << spec.variants.size()
                      << " variant(s), " << spec.seeds.size() << " seed(s))\n";
            return kOk;
        }
        if (*run_cmd)
        {
            const auto res = damtl::run_experiment(spec);
            std::cout << "wrote " << res.files.metric_files.size() << " metric files to " << spec.out_dir << '\n';
            std::cout << damtl::summary_table(res.runs);
            return kOk;
        }
        std::cout << damtl::summarize(dir);
        return kOk;
    }
    catch (const damtl::Error &e)
    {
        return report(e);
    }
    catch (const std::exception &e)
    {
        std::cerr << "damtl: " << e.what() << '\n';
        return kRuntimeError;
    }
}
