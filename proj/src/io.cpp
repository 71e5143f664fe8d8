#include "swstab/io.hpp"

#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "swstab/hartree_spec.hpp"
#include "swstab/planewave.hpp"

namespace swstab {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& msg) { throw ConfigError(key + ": " + msg); }

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void check_keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
    if (!j.is_object()) bad(path.empty() ? "<root>" : path, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
            bad(join(path, it.key()), "unknown key (allowed: " + list + ")");
        }
}

double get_num(const json& j, const std::string& path, const std::string& key, double def, bool (*ok)(double),
               const char* constraint) {
    if (!j.contains(key)) return def;
    const json& v = j.at(key);
    if (!v.is_number()) bad(join(path, key), "expected a number");
    double x = v.get<double>();
    if (!std::isfinite(x) || !ok(x)) bad(join(path, key), std::string("must satisfy ") + constraint);
    return x;
}

int get_int(const json& j, const std::string& path, const std::string& key, int def, bool (*ok)(int),
            const char* constraint) {
    if (!j.contains(key)) return def;
    const json& v = j.at(key);
    if (!v.is_number_integer()) bad(join(path, key), "expected an integer");
    long long x = v.get<long long>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max() || !ok(int(x)))
        bad(join(path, key), std::string("must satisfy ") + constraint);
    return int(x);
}

Mode get_mode(const json& v, const std::string& path, int d) {
    if (!v.is_array() || int(v.size()) != d) bad(path, "expected an integer array of length d = " + std::to_string(d));
    Mode m{0, 0};
    for (int i = 0; i < d; ++i) {
        if (!v[i].is_number_integer()) bad(path, "expected integers");
        long long x = v[i].get<long long>();
        if (std::abs(x) > 100000) bad(path, "mode component out of range");
        m[i] = int(x);
    }
    return m;
}

std::pair<size_t, size_t> line_col(const std::string& text, size_t byte) {
    size_t line = 1, col = 1;
    for (size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

bool pos(double x) { return x > 0; }
bool nonneg(double x) { return x >= 0; }
bool posi(int x) { return x > 0; }
bool nonnegi(int x) { return x >= 0; }
bool any(double) { return true; }

ojson mode_json(const Mode& m, int d) {
    if (d == 1) return m[0];
    return ojson::array({m[0], m[1]});
}

ojson cplx_json(cplx z) { return ojson::array({z.real(), z.imag()}); }

ojson modes_json(const std::vector<Mode>& ms, int d) {
    ojson a = ojson::array();
    for (const auto& m : ms) a.push_back(mode_json(m, d));
    return a;
}

}  // namespace

// ---- config -----------------------------------------------------------------

RunConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        auto [l, c] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
        std::ostringstream os;
        os << "parse error at line " << l << ", column " << c << ": " << e.what();
        throw ConfigError(os.str());
    }
    check_keys(j, "", {"coupling", "k", "grid", "analysis", "dynamics", "output"});
    if (!j.contains("coupling")) bad("coupling", "required section missing");
    RunConfig cfg;

    const json& cj = j.at("coupling");
    check_keys(cj, "coupling", {"d", "n", "gamma", "physical", "c", "sigma1", "sigma2", "quadrature"});
    auto& cs = cfg.coupling;
    cs.d = get_int(cj, "coupling", "d", 1, [](int x) { return x == 1 || x == 2; }, "d in {1, 2}");
    cs.n = get_int(cj, "coupling", "n", 3, [](int x) { return x >= 3 && x <= 64; },
                   "n >= 3 (kappa diverges for n < 3)");
    if (cj.contains("gamma") && cj.contains("physical")) bad("coupling", "give either gamma or physical, not both");
    if (cj.contains("physical")) {
        const json& p = cj.at("physical");
        check_keys(p, "coupling.physical", {"alpha", "beta", "mass_ratio"});
        for (const char* key : {"alpha", "beta", "mass_ratio"})
            if (!p.contains(key)) bad(join("coupling.physical", key), "required");
        PhysicalCoupling pc;
        pc.alpha = get_num(p, "coupling.physical", "alpha", 0, pos, "alpha > 0");
        pc.beta = get_num(p, "coupling.physical", "beta", 0, pos, "beta > 0");
        pc.mass_ratio = get_num(p, "coupling.physical", "mass_ratio", 0, pos, "mass_ratio > 0");
        cfg.physical = pc;
        cs.gamma = gamma_from_physical(pc.alpha, pc.beta, pc.mass_ratio);
    } else {
        cs.gamma = get_num(cj, "coupling", "gamma", 0.1, nonneg, "gamma >= 0");
    }
    if (cj.contains("c")) {
        const json& c = cj.at("c");
        if (c.is_string()) {
            if (c.get<std::string>() != "infinite") bad("coupling.c", "expected a positive number or \"infinite\"");
            cs.c = std::numeric_limits<double>::infinity();
        } else {
            cs.c = get_num(cj, "coupling", "c", 1.0, pos, "c > 0");
        }
    }

    RadialQuadrature q;
    if (cj.contains("quadrature")) {
        const json& qj = cj.at("quadrature");
        check_keys(qj, "coupling.quadrature", {"R", "N", "panel_order", "tail_tol"});
        q.R = get_num(qj, "coupling.quadrature", "R", q.R, pos, "R > 0");
        q.N = get_int(qj, "coupling.quadrature", "N", q.N, posi, "N > 0");
        q.panel_order = get_int(qj, "coupling.quadrature", "panel_order", q.panel_order,
                                [](int x) { return x >= 2 && x <= 64; }, "2 <= panel_order <= 64");
        q.tail_tol = get_num(qj, "coupling.quadrature", "tail_tol", q.tail_tol, pos, "tail_tol > 0");
        if (q.N % q.panel_order != 0) bad("coupling.quadrature.N", "must be a multiple of panel_order");
    }

    if (cj.contains("sigma1")) {
        const json& s = cj.at("sigma1");
        check_keys(s, "coupling.sigma1", {"kind", "coeffs"});
        std::string kind = s.value("kind", "cosine");
        if (kind == "cosine") {
            if (s.contains("coeffs")) bad("coupling.sigma1.coeffs", "not used with kind cosine");
            cs.sigma1 = Sigma1Spec::cosine(cs.d);
        } else if (kind == "coeffs") {
            if (!s.contains("coeffs") || !s.at("coeffs").is_array()) bad("coupling.sigma1.coeffs", "expected an array");
            std::vector<std::pair<Mode, double>> co;
            int i = 0;
            for (const auto& e : s.at("coeffs")) {
                std::string p = "coupling.sigma1.coeffs[" + std::to_string(i++) + "]";
                check_keys(e, p, {"m", "value"});
                if (!e.contains("m") || !e.contains("value")) bad(p, "needs m and value");
                co.push_back({get_mode(e.at("m"), p + ".m", cs.d), get_num(e, p, "value", 0, any, "finite")});
            }
            try {
                cs.sigma1 = Sigma1Spec(cs.d, co);
            } catch (const SpecError& e) {
                bad("coupling.sigma1", e.what());
            }
        } else {
            bad("coupling.sigma1.kind", "expected cosine or coeffs");
        }
    } else {
        cs.sigma1 = Sigma1Spec::cosine(cs.d);
    }

    try {
        if (cj.contains("sigma2")) {
            const json& s = cj.at("sigma2");
            check_keys(s, "coupling.sigma2", {"kind", "width", "amplitude", "r", "v"});
            std::string kind = s.value("kind", "gaussian");
            if (kind == "gaussian") {
                if (s.contains("r") || s.contains("v")) bad("coupling.sigma2", "r/v only apply to radial_table");
                double w = get_num(s, "coupling.sigma2", "width", 1.0, pos, "width > 0");
                double a = get_num(s, "coupling.sigma2", "amplitude", 1.0, pos, "amplitude > 0");
                cs.sigma2 = Sigma2Spec::gaussian(cs.n, w, a, q);
            } else if (kind == "radial_table") {
                if (s.contains("width") || s.contains("amplitude"))
                    bad("coupling.sigma2", "width/amplitude only apply to gaussian");
                if (!s.contains("r") || !s.contains("v")) bad("coupling.sigma2", "radial_table needs r and v");
                std::vector<double> r, v;
                for (const auto& x : s.at("r")) {
                    if (!x.is_number()) bad("coupling.sigma2.r", "expected numbers");
                    r.push_back(x.get<double>());
                }
                for (const auto& x : s.at("v")) {
                    if (!x.is_number()) bad("coupling.sigma2.v", "expected numbers");
                    v.push_back(x.get<double>());
                }
                cs.sigma2 = Sigma2Spec::radial_table(r, v, q);
            } else {
                bad("coupling.sigma2.kind", "expected gaussian or radial_table");
            }
        } else {
            cs.sigma2 = Sigma2Spec::gaussian(cs.n, 1.0, 1.0, q);
        }
        cs.validate();
    } catch (const SpecError& e) {
        throw ConfigError(std::string("coupling: ") + e.what());
    }

    if (j.contains("k")) cfg.k = get_mode(j.at("k"), "k", cs.d);

    cfg.grid.d = cs.d;
    if (j.contains("grid")) {
        const json& g = j.at("grid");
        check_keys(g, "grid", {"N_x", "M_modes"});
        cfg.grid.N_x = get_int(g, "grid", "N_x", 256, [](int x) { return x >= 4 && x <= (1 << 16) && (x & (x - 1)) == 0; },
                               "N_x a power of two in [4, 65536]");
        cfg.grid.M_modes = get_int(g, "grid", "M_modes", cfg.grid.N_x / 3, nonnegi, "M_modes >= 0");
        if (cfg.grid.N_x < 2 * cfg.grid.M_modes + 2) bad("grid.M_modes", "must satisfy N_x >= 2 M_modes + 2");
    } else {
        cfg.grid.M_modes = cfg.grid.N_x / 3;
    }

    if (j.contains("analysis")) {
        const json& a = j.at("analysis");
        check_keys(a, "analysis", {"M_max", "rect", "tolerances"});
        cfg.analysis.M_max = get_int(a, "analysis", "M_max", 0, [](int x) { return x >= 0 && x <= 10000; },
                                     "0 <= M_max <= 10000 (0 = default)");
        if (a.contains("rect")) {
            const json& r = a.at("rect");
            check_keys(r, "analysis.rect", {"re_min", "re_max", "im_min", "im_max"});
            for (const char* key : {"re_min", "re_max", "im_min", "im_max"})
                if (!r.contains(key)) bad(join("analysis.rect", key), "required");
            RootRect rr;
            rr.re_min = get_num(r, "analysis.rect", "re_min", 0, pos, "re_min > 0");
            rr.re_max = get_num(r, "analysis.rect", "re_max", 0, pos, "re_max > 0");
            rr.im_min = get_num(r, "analysis.rect", "im_min", 0, any, "finite");
            rr.im_max = get_num(r, "analysis.rect", "im_max", 0, any, "finite");
            if (!(rr.re_max > rr.re_min) || !(rr.im_max > rr.im_min)) bad("analysis.rect", "must be nondegenerate");
            cfg.analysis.rect = rr;
        }
        if (a.contains("tolerances")) {
            const json& t = a.at("tolerances");
            const std::string p = "analysis.tolerances";
            check_keys(t, p, {"residual", "newton_max_iter", "winding_tol", "max_subdivisions"});
            auto& tol = cfg.analysis.tol;
            tol.residual = get_num(t, p, "residual", tol.residual, pos, "residual > 0");
            tol.newton_max_iter = get_int(t, p, "newton_max_iter", tol.newton_max_iter, posi, "newton_max_iter > 0");
            tol.winding_tol = get_num(t, p, "winding_tol", tol.winding_tol, [](double x) { return x > 0 && x < 0.5; },
                                      "0 < winding_tol < 0.5");
            tol.max_subdivisions = get_int(t, p, "max_subdivisions", tol.max_subdivisions, posi, "max_subdivisions > 0");
        }
    }

    if (j.contains("dynamics")) {
        const json& dj = j.at("dynamics");
        check_keys(dj, "dynamics", {"dt", "T", "amplitude", "c_list", "sample_every"});
        auto& dy = cfg.dynamics;
        dy.dt = get_num(dj, "dynamics", "dt", dy.dt, pos, "dt > 0");
        dy.T = get_num(dj, "dynamics", "T", dy.T, nonneg, "T >= 0");
        dy.amplitude = get_num(dj, "dynamics", "amplitude", dy.amplitude, [](double x) { return x > 0 && x <= 1; },
                               "0 < amplitude <= 1");
        dy.sample_every = get_int(dj, "dynamics", "sample_every", dy.sample_every, posi, "sample_every > 0");
        if (dj.contains("c_list")) {
            const json& cl = dj.at("c_list");
            if (!cl.is_array() || cl.empty()) bad("dynamics.c_list", "expected a nonempty array");
            dy.c_list.clear();
            for (const auto& x : cl) {
                if (!x.is_number() || !(x.get<double>() > 0)) bad("dynamics.c_list", "entries must be positive numbers");
                if (!dy.c_list.empty() && !(x.get<double>() > dy.c_list.back()))
                    bad("dynamics.c_list", "entries must increase");
                dy.c_list.push_back(x.get<double>());
            }
        }
    }
    cfg.grid.dt = cfg.dynamics.dt;
    cfg.grid.T = cfg.dynamics.T;

    if (j.contains("output")) {
        const json& o = j.at("output");
        check_keys(o, "output", {"directory", "formats"});
        if (o.contains("directory")) {
            if (!o.at("directory").is_string()) bad("output.directory", "expected a string");
            cfg.output.directory = o.at("directory").get<std::string>();
        }
        if (o.contains("formats")) {
            const json& f = o.at("formats");
            if (!f.is_array()) bad("output.formats", "expected an array");
            std::set<std::string> seen;
            for (const auto& x : f) {
                if (!x.is_string() || (x != "json" && x != "csv")) bad("output.formats", "entries must be json or csv");
                seen.insert(x.get<std::string>());
            }
            cfg.output.formats.assign(seen.begin(), seen.end());
        }
    }
    try {
        cfg.grid.validate();
    } catch (const SpecError& e) {
        throw ConfigError(std::string("grid: ") + e.what());
    }
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config_text(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

ojson config_to_json(const RunConfig& cfg) {
    const auto& cs = cfg.coupling;
    ojson c;
    c["d"] = cs.d;
    c["n"] = cs.n;
    if (cfg.physical)
        c["physical"] = {{"alpha", cfg.physical->alpha}, {"beta", cfg.physical->beta},
                         {"mass_ratio", cfg.physical->mass_ratio}};
    else
        c["gamma"] = cs.gamma;
    if (cs.hartree_limit())
        c["c"] = "infinite";
    else
        c["c"] = cs.c;
    bool cosine = cs.sigma1.coeffs() == Sigma1Spec::cosine(cs.d).coeffs();
    if (cosine) {
        c["sigma1"] = {{"kind", "cosine"}};
    } else {
        ojson co = ojson::array();
        for (const auto& [m, v] : cs.sigma1.coeffs()) {
            ojson mm = ojson::array();
            for (int i = 0; i < cs.d; ++i) mm.push_back(m[i]);
            co.push_back({{"m", mm}, {"value", v}});
        }
        c["sigma1"] = {{"kind", "coeffs"}, {"coeffs", co}};
    }
    if (cs.sigma2.kind() == Sigma2Spec::Kind::gaussian)
        c["sigma2"] = {{"kind", "gaussian"}, {"width", cs.sigma2.width()}, {"amplitude", cs.sigma2.amplitude()}};
    else
        c["sigma2"] = {{"kind", "radial_table"}, {"r", cs.sigma2.table_r()}, {"v", cs.sigma2.table_v()}};
    const auto& q = cs.sigma2.quadrature();
    c["quadrature"] = {{"R", q.R}, {"N", q.N}, {"panel_order", q.panel_order}, {"tail_tol", q.tail_tol}};

    ojson j;
    j["coupling"] = c;
    ojson k = ojson::array();
    for (int i = 0; i < cs.d; ++i) k.push_back(cfg.k[i]);
    j["k"] = k;
    j["grid"] = {{"N_x", cfg.grid.N_x}, {"M_modes", cfg.grid.M_modes}};
    ojson a;
    a["M_max"] = cfg.analysis.M_max;
    if (cfg.analysis.rect) {
        const auto& r = *cfg.analysis.rect;
        a["rect"] = {{"re_min", r.re_min}, {"re_max", r.re_max}, {"im_min", r.im_min}, {"im_max", r.im_max}};
    }
    const auto& t = cfg.analysis.tol;
    a["tolerances"] = {{"residual", t.residual},
                       {"newton_max_iter", t.newton_max_iter},
                       {"winding_tol", t.winding_tol},
                       {"max_subdivisions", t.max_subdivisions}};
    j["analysis"] = a;
    const auto& dy = cfg.dynamics;
    j["dynamics"] = {{"dt", dy.dt},
                     {"T", dy.T},
                     {"amplitude", dy.amplitude},
                     {"c_list", dy.c_list},
                     {"sample_every", dy.sample_every}};
    j["output"] = {{"directory", cfg.output.directory}, {"formats", cfg.output.formats}};
    return j;
}

// ---- subcommands --------------------------------------------------------------

const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> s = {"analyze-hartree", "analyze-sw", "roots",        "simulate",
                                               "growth",          "limit-c",    "check-constants"};
    return s;
}

namespace {

ojson constants_json(const CouplingSpec& cs, const CouplingConstants& kc) {
    auto sm = smallness_check(kc);
    ojson r;
    r["gamma"] = cs.gamma;
    r["kappa"] = kc.kappa;
    r["kappa_at_s1"] = compute_kappa_mu(cs.sigma2, cs.n, 1.0).real();
    r["p_integral_0_10"] = kernel_p_integral(cs.sigma2, cs.n, 10.0);
    r["sigma1_mean"] = cs.sigma1.mean();
    r["sigma1_L1"] = cs.sigma1.l1_norm();
    r["upsilon_star"] = kc.upsilon_star;
    r["smallness_product"] = kc.kappa_L1sigma1_product;
    r["smallness_margin"] = sm.margin;
    r["holds"] = sm.holds;
    return r;
}

ojson sw_counts_json(const SWCountReport& r, int d) {
    ojson o;
    o["n_L"] = r.n_L;
    o["dim_ker"] = r.dim_ker;
    o["K_star"] = modes_json(r.K_star, d);
    o["N0"] = r.N0;
    o["N_minus"] = r.Nminus;
    o["N_plus"] = r.Nplus;
    o["N_Cplus"] = r.NCplus;
    o["verdict"] = r.stable ? "spectrally stable" : "spectrally unstable";
    o["unstable_modes"] = modes_json(r.unstable_modes, d);
    o["calno"] = r.calno;
    return o;
}

ojson verdicts_json(const std::vector<ModeVerdict>& vs, int d) {
    ojson a = ojson::array();
    for (const auto& v : vs)
        a.push_back({{"m", mode_json(v.m, d)},
                     {"sigma_zero", v.sigma_zero},
                     {"quartic_sign", v.quartic_sign},
                     {"eigenvalues", v.eigenvalues},
                     {"n_negative", v.n_negative},
                     {"in_kernel_set", v.in_kernel_set},
                     {"counts_plus", v.counts_plus},
                     {"counts_cplus", v.counts_cplus}});
    return a;
}

ojson roots_json(const std::vector<UnstableRoot>& rs, int d) {
    ojson a = ojson::array();
    for (const auto& r : rs)
        a.push_back({{"m", mode_json(r.m, d)},
                     {"lambda", cplx_json(r.lambda)},
                     {"residual", r.residual},
                     {"newton_iters", r.newton_iters}});
    return a;
}

void require_finite_c(const CouplingSpec& cs, const std::string& name) {
    if (cs.hartree_limit()) throw SpecError(name + " needs a finite wave speed c");
}

MonitorTrace simple_trace(std::vector<std::string> cols, const std::vector<std::vector<double>>& rows) {
    MonitorTrace t;
    t.columns = std::move(cols);
    for (const auto& r : rows) t.add(r);
    return t;
}

void summarize_run(ojson& res, const RunResult& run, bool sw) {
    const auto& tr = run.trace;
    auto mass = tr.column("l2_mass");
    auto energy = tr.column(sw ? "h_sw" : "h_ha");
    auto h1 = tr.column("h1_fluct");
    double mdrift = 0, edrift = 0, h1max = 0;
    for (size_t i = 0; i < mass.size(); ++i) {
        mdrift = std::max(mdrift, std::abs(mass[i] - mass[0]) / std::abs(mass[0]));
        edrift = std::max(edrift, std::abs(energy[i] - energy[0]) / std::max(1e-300, std::abs(energy[0])));
        if (std::isfinite(h1[i])) h1max = std::max(h1max, h1[i]);
    }
    res["samples"] = tr.rows.size();
    res["final_time"] = run.final_state.t;
    res["mass_drift_rel"] = mdrift;
    res["energy_drift_rel"] = edrift;
    res["max_h1_fluct"] = h1max;
    if (sw) {
        auto F = tr.column("F_norm"), B = tr.column("CF_X2");
        bool ok = true;
        for (size_t i = 0; i < F.size(); ++i)
            if (std::isfinite(F[i]) && F[i] > B[i] * (1 + 1e-12) + 1e-300) ok = false;
        res["remainder_bound_holds"] = ok;
    }
    res["diagnostics"] = run.diagnostics;
}

}  // namespace

ReportBundle run_subcommand(const std::string& name, const RunConfig& cfg, int threads) {
    using clock = std::chrono::steady_clock;
    auto t0 = clock::now();
    ReportBundle b;
    const auto& cs = cfg.coupling;
    const int d = cs.d;
    b.report["subcommand"] = name;
    b.report["tool_version"] = tool_version;
    b.report["config"] = config_to_json(cfg);
    ojson res;
    CouplingConstants kc = compute_constants(cs);
    auto t_const = clock::now();
    try {
        if (name == "check-constants") {
            res = constants_json(cs, kc);
        } else if (name == "analyze-hartree") {
            int M = cfg.analysis.M_max > 0 ? cfg.analysis.M_max : default_M_max(cs);
            auto rep = spectrum_report_hartree(cfg.k, M, cs, kc);
            auto co = coercivity_margins_hartree(M, cs, kc);
            ojson modes = ojson::array();
            for (const auto& v : rep.modes)
                modes.push_back({{"m", mode_json(v.m, d)},
                                 {"lambda_plus", cplx_json(v.lambda_plus)},
                                 {"lambda_minus", cplx_json(v.lambda_minus)},
                                 {"criterion_value", v.criterion_value},
                                 {"stable", v.stable},
                                 {"zero_margin", v.zero_margin}});
            res["M_max"] = rep.M_max;
            res["stable"] = rep.stable;
            res["verdict"] = rep.stable ? "spectrally stable" : "spectrally unstable";
            res["unstable_modes"] = modes_json(rep.unstable_modes, d);
            res["modes"] = modes;
            res["coercivity_delta"] = co.delta;
            res["coercive"] = co.coercive;
            res["smallness"] = constants_json(cs, kc);
        } else if (name == "analyze-sw") {
            try {
                auto rep = counting_breakdown(cfg.k, cs, kc);
                res = sw_counts_json(rep, d);
                res["per_mode"] = verdicts_json(rep.per_mode, d);
                auto m0 = sw_mode0_lambda(cs, kc);
                res["mode0_eigenvalues"] = {m0.first, m0.second};
            } catch (const OutOfRegime& e) {
                res["verdict"] = "out of proven regime";
                res["diagnostic"] = e.what();
                res["per_mode"] = verdicts_json(mode_verdicts(cfg.k, cs, kc), d);
                b.exit_code = 2;
            }
        } else if (name == "roots") {
            require_finite_c(cs, name);
            try {
                auto cnt = counting_breakdown(cfg.k, cs, kc);
                res["N_Cplus"] = cnt.NCplus;
                res["unstable_modes"] = modes_json(cnt.unstable_modes, d);
                if (cnt.NCplus == 0) {
                    res["message"] = "no unstable spectrum";
                    res["roots"] = ojson::array();
                } else if (cfg.analysis.rect) {
                    std::vector<UnstableRoot> roots, partners;
                    std::vector<std::string> diag;
                    for (const Mode& m : cnt.unstable_modes) {
                        auto rr = dispersion_root_find(m, cfg.k, cs, kc, *cfg.analysis.rect, cfg.analysis.tol);
                        roots.insert(roots.end(), rr.roots.begin(), rr.roots.end());
                        partners.insert(partners.end(), rr.partners.begin(), rr.partners.end());
                        diag.insert(diag.end(), rr.diagnostics.begin(), rr.diagnostics.end());
                    }
                    double a = 0;
                    for (const auto& r : roots) a = std::max(a, r.lambda.real());
                    res["a_star"] = a;
                    res["roots"] = roots_json(roots, d);
                    res["partners"] = roots_json(partners, d);
                    res["diagnostics"] = diag;
                } else {
                    auto g = growth_rate_predicted(cfg.k, cs, kc, cfg.analysis.tol, threads);
                    res["a_star"] = g.a_star;
                    res["roots"] = roots_json(g.roots, d);
                    res["diagnostics"] = g.diagnostics;
                }
            } catch (const OutOfRegime& e) {
                res["verdict"] = "out of proven regime";
                res["diagnostic"] = e.what();
                b.exit_code = 2;
            }
        } else if (name == "simulate") {
            Grid grid(cfg.grid);
            PlaneWave pw = make_plane_wave(cfg.k, cs, kc);
            SolverOptions opt;
            opt.T = cfg.dynamics.T;
            opt.dt = cfg.dynamics.dt;
            opt.sample_every = cfg.dynamics.sample_every;
            opt.reference = pw;
            auto U0 = reference_perturbed_wave(cfg.k, cfg.dynamics.amplitude, grid);
            RunResult run;
            if (cs.hartree_limit()) {
                run = evolve_hartree(U0, cs, kc, grid, opt);
                res["system"] = "hartree";
            } else {
                run = evolve_sw_field(with_field_profile(U0, pw, cs, grid), cs, kc, grid, opt);
                res["system"] = "schroedinger-wave";
                b.checkpoint = run.final_state;
            }
            res["omega"] = pw.omega;
            summarize_run(res, run, !cs.hartree_limit());
            b.series.push_back({"monitors", run.trace});
        } else if (name == "growth") {
            require_finite_c(cs, name);
            Grid grid(cfg.grid);
            GrowthOptions go;
            go.threads = threads;
            go.sample_every = std::max(1, cfg.dynamics.sample_every);
            try {
                auto g = measure_growth_rate(cfg.k, cfg.dynamics.amplitude, cfg.dynamics.T, cs, kc, grid,
                                             cfg.dynamics.dt, go);
                res["fit_accepted"] = g.fit_accepted;
                res["a_measured"] = g.a_measured;
                res["a_predicted"] = g.a_predicted;
                res["relative_gap"] = g.relative_gap;
                res["exit_time"] = g.exit_time;
                res["window"] = {g.window_start, g.window_end};
                res["mode"] = mode_json(g.mode, d);
                res["lambda"] = cplx_json(g.lambda);
                res["diagnostics"] = g.diagnostics;
                std::vector<std::vector<double>> rows;
                for (size_t i = 0; i < g.times.size(); ++i)
                    if (rows.empty() || g.times[i] > rows.back()[0]) rows.push_back({g.times[i], g.amplitude[i]});
                b.series.push_back({"growth", simple_trace({"t", "amplitude"}, rows)});
            } catch (const OutOfRegime& e) {
                res["verdict"] = "out of proven regime";
                res["diagnostic"] = e.what();
                b.exit_code = 2;
            }
        } else if (name == "limit-c") {
            Grid grid(cfg.grid);
            auto U0 = reference_perturbed_wave(cfg.k, cfg.dynamics.amplitude, grid);
            auto rows = c_limit_study(U0, cfg.dynamics.c_list, cfg.dynamics.T, cfg.dynamics.dt,
                                      cfg.dynamics.sample_every, cs, grid, threads);
            ojson tab = ojson::array();
            std::vector<std::vector<double>> srows;
            bool mono = true;
            for (size_t i = 0; i < rows.size(); ++i) {
                const auto& r = rows[i];
                tab.push_back({{"c", r.c},
                               {"sup_error", r.sup_error},
                               {"p_c_integral", r.p_c_integral},
                               {"kappa_over_c2", r.kappa_over_c2}});
                srows.push_back({r.c, r.sup_error, r.p_c_integral, r.kappa_over_c2});
                if (i > 0 && r.sup_error > rows[i - 1].sup_error) mono = false;
            }
            res["rows"] = tab;
            res["nonincreasing"] = mono;
            b.series.push_back({"limit_c", simple_trace({"c", "sup_error", "p_c_integral", "kappa_over_c2"}, srows)});
        } else {
            throw SpecError("unknown subcommand " + name);
        }
    } catch (const SpecError&) {
        throw;
    }
    b.report["result"] = res;
    auto t1 = clock::now();
    auto sec = [](auto a, auto z) { return std::chrono::duration<double>(z - a).count(); };
    b.timings = {{"subcommand", name}, {"constants_s", sec(t0, t_const)}, {"total_s", sec(t0, t1)}, {"threads", threads}};
    return b;
}

void write_bundle(const ReportBundle& b, const RunConfig& cfg, const std::string& dir,
                  const std::vector<std::string>& formats) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
    auto has = [&](const char* f) { return std::find(formats.begin(), formats.end(), f) != formats.end(); };
    auto write_text = [](const fs::path& p, const std::string& s) {
        std::ofstream o(p, std::ios::binary);
        if (!o) throw std::runtime_error("cannot write " + p.string());
        o << s;
        if (!o) throw std::runtime_error("write failed: " + p.string());
    };
    if (has("json")) {
        write_text(fs::path(dir) / "report.json", b.report.dump(2) + "\n");
        write_text(fs::path(dir) / "timings.json", b.timings.dump(2) + "\n");
    }
    if (has("csv"))
        for (const auto& s : b.series) write_series(s.trace, (fs::path(dir) / (s.name + ".csv")).string());
    if (b.checkpoint) write_checkpoint(*b.checkpoint, cfg.coupling, cfg.grid, (fs::path(dir) / "final_state.bin").string());
}

// ---- CSV ----------------------------------------------------------------------

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, r.ptr);
}

void write_series(const MonitorTrace& trace, const std::string& path) {
    std::string s;
    for (size_t i = 0; i < trace.columns.size(); ++i) s += (i ? "," : "") + trace.columns[i];
    s += "\n";
    for (const auto& row : trace.rows) {
        for (size_t i = 0; i < row.size(); ++i) s += (i ? "," : "") + format_double(row[i]);
        s += "\n";
    }
    std::ofstream o(path, std::ios::binary);
    if (!o) throw std::runtime_error("cannot write series file " + path);
    o << s;
    if (!o) throw std::runtime_error("write failed: " + path);
}

MonitorTrace read_series(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read series file " + path);
    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) out.push_back(f);
        return out;
    };
    MonitorTrace t;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header");
    t.columns = split(line);
    size_t ln = 1;
    while (std::getline(in, line)) {
        ++ln;
        auto f = split(line);
        if (f.size() != t.columns.size()) throw std::runtime_error(path + ": wrong field count on line " + std::to_string(ln));
        std::vector<double> row;
        for (const auto& x : f) {
            char* end = nullptr;
            double v = std::strtod(x.c_str(), &end);
            if (end == x.c_str() || *end) throw std::runtime_error(path + ": bad number on line " + std::to_string(ln));
            row.push_back(v);
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

// ---- checkpoint -------------------------------------------------------------

namespace {
constexpr char ckpt_magic[8] = {'S', 'W', 'S', 'T', 'C', 'K', 'P', '1'};

template <class T>
void put_le(std::ostream& o, T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    o.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& in, const std::string& path) {
    unsigned char b[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw std::runtime_error(path + ": truncated checkpoint");
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}
}  // namespace

void write_checkpoint(const FieldState& st, const CouplingSpec& spec, const GridSpec& grid, const std::string& path) {
    std::ofstream o(path, std::ios::binary);
    if (!o) throw std::runtime_error("cannot write checkpoint " + path);
    o.write(ckpt_magic, 8);
    put_le<uint32_t>(o, 1);           // format version
    put_le<uint32_t>(o, 0x01020304);  // byte-order mark, stored little endian
    put_le<uint32_t>(o, 8);           // bytes per float
    for (int v : {grid.d, spec.n, grid.N_x, grid.M_modes, st.n_xi, int(st.field_modes.size())}) put_le<int32_t>(o, v);
    put_le<double>(o, st.t);
    for (const auto& m : st.field_modes) {
        put_le<int32_t>(o, m[0]);
        put_le<int32_t>(o, m[1]);
    }
    put_le<uint64_t>(o, st.U.size());
    for (const auto* v : {&st.U, &st.phi_hat, &st.pi_hat})
        for (cplx z : *v) {
            put_le<double>(o, z.real());
            put_le<double>(o, z.imag());
        }
    if (!o) throw std::runtime_error("write failed: " + path);
}

FieldState read_checkpoint(const std::string& path, CheckpointHeader* header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path);
    char mg[8];
    if (!in.read(mg, 8) || std::memcmp(mg, ckpt_magic, 8) != 0) throw std::runtime_error(path + ": not a checkpoint");
    if (get_le<uint32_t>(in, path) != 1) throw std::runtime_error(path + ": unsupported checkpoint version");
    if (get_le<uint32_t>(in, path) != 0x01020304) throw std::runtime_error(path + ": byte-order mark mismatch");
    if (get_le<uint32_t>(in, path) != 8) throw std::runtime_error(path + ": expected 64-bit floats");
    CheckpointHeader h;
    h.d = get_le<int32_t>(in, path);
    h.n = get_le<int32_t>(in, path);
    h.N_x = get_le<int32_t>(in, path);
    h.M_modes = get_le<int32_t>(in, path);
    h.N_xi = get_le<int32_t>(in, path);
    h.n_field_modes = get_le<int32_t>(in, path);
    if (h.d < 1 || h.d > 2 || h.N_x < 1 || h.N_xi < 0 || h.n_field_modes < 0 || h.n_field_modes > 1000000)
        throw std::runtime_error(path + ": corrupt checkpoint header");
    FieldState st;
    st.t = get_le<double>(in, path);
    st.n_xi = h.N_xi;
    for (int i = 0; i < h.n_field_modes; ++i) {
        int a = get_le<int32_t>(in, path);
        int b = get_le<int32_t>(in, path);
        st.field_modes.push_back({a, b});
    }
    uint64_t nU = get_le<uint64_t>(in, path);
    uint64_t expect = h.d == 1 ? uint64_t(h.N_x) : uint64_t(h.N_x) * h.N_x;
    if (nU != expect) throw std::runtime_error(path + ": U size does not match header shape");
    auto read_vec = [&](std::vector<cplx>& v, size_t n) {
        v.resize(n);
        for (auto& z : v) {
            double re = get_le<double>(in, path);
            double im = get_le<double>(in, path);
            z = {re, im};
        }
    };
    read_vec(st.U, nU);
    read_vec(st.phi_hat, size_t(h.n_field_modes) * h.N_xi);
    read_vec(st.pi_hat, size_t(h.n_field_modes) * h.N_xi);
    if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error(path + ": trailing bytes in checkpoint");
    if (header) *header = h;
    return st;
}

}  // namespace swstab
