#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "swstab/io.hpp"

int main(int argc, char** argv) {
    using namespace swstab;
    CLI::App app{"Stability analysis of plane waves for the Hartree and Schroedinger-wave systems"};
    app.set_version_flag("--version", tool_version);
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::string config, out, format = "config";
    int threads = 1;
    long long seed = 0;
    app.add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    app.add_option("--out", out, "output directory (overrides output.directory)");
    app.add_option("--threads", threads, "worker cap")->check(CLI::Range(1, 1024));
    app.add_option("--format", format, "json, csv or both (default: output.formats)")
        ->check(CLI::IsMember({"json", "csv", "both", "config"}));
    app.add_option("--seed", seed, "reserved; the dynamics are deterministic");
    for (const auto& s : subcommands()) app.add_subcommand(s, "run " + s);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    const std::string name = app.get_subcommands().front()->get_name();

    try {
        RunConfig cfg = parse_config_file(config);
        std::vector<std::string> formats = cfg.output.formats;
        if (format == "json" || format == "csv") formats = {format};
        if (format == "both") formats = {"json", "csv"};
        std::string dir = out.empty() ? cfg.output.directory : out;
        ReportBundle b = run_subcommand(name, cfg, threads);
        write_bundle(b, cfg, dir, formats);
        std::cout << b.report["result"].dump(2) << "\n";
        if (b.exit_code == 2) std::cerr << "swstab: analysis out of proven regime\n";
        return b.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "swstab " << name << ": " << e.what() << "\n";
        return 1;
    }
}
