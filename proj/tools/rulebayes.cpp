#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rulebayes/experiment.hpp"

namespace fs = std::filesystem;
namespace ex = rulebayes::experiment;

namespace {

enum Exit : int { ok = 0, config_error = 1, numerical_error = 2, io_error = 3 };

struct Flags {
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    bool desk = false;
};

ex::RunOptions options(const Flags& f, const fs::path& out_dir) {
    ex::RunOptions o;
    o.seed = f.seed;
    o.desk = f.desk;
    o.out_dir = out_dir;
    return o;
}

ex::Experiment load(const std::string& path, const Flags& f, const fs::path& out_dir = {}) {
    return ex::Experiment(ex::load_config(path, f.desk), options(f, out_dir.empty() ? fs::path(f.out_dir) : out_dir));
}

int guarded(const std::function<void()>& body) {
    try {
        body();
        return ok;
    } catch (const rulebayes::IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return io_error;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return io_error;
    } catch (const rulebayes::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return numerical_error;
    } catch (const rulebayes::EvaluationError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return numerical_error;
    } catch (const rulebayes::Error& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return config_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return config_error;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rule-informed Bayesian regression experiments"};
    app.require_subcommand(1);
    Flags flags;
    const auto add_flags = [&flags](CLI::App* cmd) {
        cmd->add_option("--seed", flags.seed, "Master seed (overrides the config)");
        cmd->add_option("--out-dir", flags.out_dir, "Output directory");
        cmd->add_flag("--desk", flags.desk, "Use the scaled-down variant");
    };

    std::string config;
    std::string config_b;

    auto* generate = app.add_subcommand("generate", "Write the experiment's data set");
    generate->add_option("config", config, "Experiment config")->required();
    add_flags(generate);

    auto* fit = app.add_subcommand("fit", "Fit and write samples and summary");
    fit->add_option("config", config, "Experiment config")->required();
    add_flags(fit);

    auto* evaluate = app.add_subcommand("evaluate", "Fit, then write metrics and plot data");
    evaluate->alias("run");
    evaluate->add_option("config", config, "Experiment config")->required();
    add_flags(evaluate);

    auto* compare = app.add_subcommand("compare", "Evaluate two configs and compare their metrics");
    compare->add_option("config_a", config, "First config")->required();
    compare->add_option("config_b", config_b, "Second config")->required();
    add_flags(compare);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? ok : config_error;
    }

    return guarded([&] {
        if (generate->parsed()) {
            const auto e = load(config, flags);
            e.generate();
            std::cout << "wrote data to " << e.out_dir().string() << '\n';
        } else if (fit->parsed()) {
            const auto e = load(config, flags);
            e.fit();
            std::cout << "wrote fit to " << e.out_dir().string() << '\n';
        } else if (evaluate->parsed()) {
            const auto e = load(config, flags);
            const auto r = e.evaluate();
            std::cout << r.metrics.dump(2) << '\n';
        } else if (compare->parsed()) {
            const ex::Config ca = ex::load_config(config, flags.desk);
            const ex::Config cb = ex::load_config(config_b, flags.desk);
            const auto name_of = [](const ex::Config& c) {
                return c.doc.value("name", c.path.stem().string());
            };
            const fs::path root = flags.out_dir.empty()
                                      ? fs::path("out") / ("compare_" + name_of(ca) + "_vs_" + name_of(cb))
                                      : fs::path(flags.out_dir);
            const ex::Experiment a(ca, options(flags, root / "a"));
            const ex::Experiment b(cb, options(flags, root / "b"));
            const auto ra = a.evaluate();
            const auto rb = b.evaluate();
            const auto report = ex::compare_runs(ra, rb);
            ex::detail::write_atomic(root / "compare.json", report.dump(2) + "\n");
            std::cout << report.dump(2) << '\n';
        }
    });
}
