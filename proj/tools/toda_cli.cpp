#include <iostream>

#include "CLI11.hpp"
#include "toda/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Partial blow-up solutions of the SU(3) Toda system on the unit-area disk"};
    std::string command, config_path, out, check_level;
    int workers = 0;
    long long seed = -1;
    app.add_option("command", command, "green | meanfield | shadow | landscape | construct | verify-expansions")
        ->required()
        ->check(CLI::IsMember(toda::command_names()));
    app.add_option("--config", config_path, "Sectioned key-value run configuration");
    app.add_option("--out", out, "Output directory (overrides run.out)");
    app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "Random seed")->check(CLI::NonNegativeNumber);
    app.add_option("--check-level", check_level, "warn: report failing checks, assert: exit 2 on failure")
        ->check(CLI::IsMember({"warn", "assert"}));
    CLI11_PARSE(app, argc, argv);

    toda::RunConfig config;
    try {
        std::vector<std::string> problems;
        auto file = config_path.empty() ? toda::ConfigFile::parse("") : toda::ConfigFile::load(config_path);
        config = toda::parse_run_config(file, command, &problems);
        if (!problems.empty()) {
            for (const auto& p : problems) std::cerr << "config error: " << p << "\n";
            return 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }
    if (!out.empty()) config.out = out;
    if (workers > 0) config.workers = workers;
    if (seed >= 0) config.seed = static_cast<std::uint64_t>(seed);
    if (!check_level.empty()) config.check_level = check_level == "warn" ? toda::CheckLevel::Warn : toda::CheckLevel::Assert;
    return toda::run_command(config, std::cerr);
}
