#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "swstab/coupling.hpp"
#include "swstab/dynamics.hpp"
#include "swstab/grid.hpp"
#include "swstab/sw_spec.hpp"

namespace swstab {

inline constexpr const char* tool_version = "0.1.0";

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PhysicalCoupling {
    double alpha = 0, beta = 0, mass_ratio = 0;
};

struct AnalysisSpec {
    int M_max = 0;  // 0 selects the module default
    std::optional<RootRect> rect;
    RootTolerances tol;
};

struct DynamicsSpec {
    double dt = 1e-3;
    double T = 1.0;
    double amplitude = 1e-5;
    std::vector<double> c_list = {2, 4, 8};
    int sample_every = 100;
};

struct OutputSpec {
    std::string directory = "out";
    std::vector<std::string> formats = {"csv", "json"};
};

struct RunConfig {
    CouplingSpec coupling;
    std::optional<PhysicalCoupling> physical;
    Mode k{};
    GridSpec grid;
    AnalysisSpec analysis;
    DynamicsSpec dynamics;
    OutputSpec output;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);
// canonical form with all defaults filled in; parse_config_text(dump) reproduces it
nlohmann::ordered_json config_to_json(const RunConfig& cfg);

struct NamedSeries {
    std::string name;  // file stem
    MonitorTrace trace;
};

struct ReportBundle {
    nlohmann::ordered_json report;
    std::vector<NamedSeries> series;
    std::optional<FieldState> checkpoint;
    nlohmann::ordered_json timings;
    int exit_code = 0;
};

const std::vector<std::string>& subcommands();
ReportBundle run_subcommand(const std::string& name, const RunConfig& cfg, int threads = 1);
// formats is a subset of {json, csv}
void write_bundle(const ReportBundle& b, const RunConfig& cfg, const std::string& dir,
                  const std::vector<std::string>& formats);

void write_series(const MonitorTrace& trace, const std::string& path);
MonitorTrace read_series(const std::string& path);
std::string format_double(double v);

struct CheckpointHeader {
    int d = 0, n = 0, N_x = 0, M_modes = 0, N_xi = 0, n_field_modes = 0;
};
void write_checkpoint(const FieldState& st, const CouplingSpec& spec, const GridSpec& grid, const std::string& path);
FieldState read_checkpoint(const std::string& path, CheckpointHeader* header = nullptr);

}  // namespace swstab
