// tachy: run the preferred-frame FTL signaling scenarios, detour sweeps and
// frame recovery from the command line. Deterministic output: identical
// config and seed give byte-identical files.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tachy/experiment.hpp"
#include "tachy/ftl.hpp"
#include "tachy/kinematics.hpp"
#include "tachy/solver.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitNoConvergence = 3;

std::string format_g(double value, int precision) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, value);
    return buf;
}

// Write-then-rename so a crashed run never leaves a truncated file behind.
void write_atomically(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open output file: " + tmp);
        out << content;
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw std::runtime_error("cannot move output into place: " + path);
    }
}

void emit(const std::string& content, const std::string& output_path) {
    if (output_path.empty()) {
        std::cout << content;
    } else {
        write_atomically(output_path, content);
    }
}

unsigned sweep_threads() {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("TACHY_THREADS")) {
        char* end = nullptr;
        const long parsed = std::strtol(env, &end, 10);
        if (end && *end == '\0' && parsed >= 1 && parsed <= 1024) {
            n = static_cast<unsigned>(parsed);
        }
    }
    return n;
}

// Flat JSON config shared by the subcommands; CLI flags override file values.
struct RunConfig {
    double v = 0.0;
    std::string ftl = "inf";  // "inf" or a number > 1
    double l1 = 1.0;
    double l2 = 1.0;
    std::vector<double> left_grid;
    std::vector<double> right_grid;
    std::string output;
    int precision = 15;
    std::uint64_t seed = 1;

    tachy::FtlSpeed ftl_speed() const {
        if (ftl == "inf") return tachy::FtlSpeed::instantaneous();
        std::size_t used = 0;
        double value = 0.0;
        try {
            value = std::stod(ftl, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != ftl.size() || !(value > 1.0)) {
            throw std::invalid_argument("ftl: must be 'inf' or a number > 1, got '" + ftl + "'");
        }
        return tachy::FtlSpeed::finite(value);
    }
};

std::vector<double> parse_grid(const nlohmann::json& node, const std::string& name) {
    std::vector<double> grid;
    if (node.is_array()) {
        for (const auto& x : node) grid.push_back(x.get<double>());
        return grid;
    }
    if (node.is_object()) {
        const double start = node.at("start").get<double>();
        const double stop = node.at("stop").get<double>();
        const int count = node.at("count").get<int>();
        if (count < 1) throw std::invalid_argument(name + ": count must be >= 1");
        for (int i = 0; i < count; ++i) {
            grid.push_back(count == 1 ? start
                                      : start + (stop - start) * i / (count - 1));
        }
        return grid;
    }
    throw std::invalid_argument(name + ": expected an array or {start, stop, count}");
}

void load_config_file(const std::string& path, RunConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    nlohmann::json j;
    in >> j;
    if (j.contains("v")) cfg.v = j["v"].get<double>();
    if (j.contains("ftl")) {
        cfg.ftl = j["ftl"].is_string() ? j["ftl"].get<std::string>()
                                       : tachy::format_g15(j["ftl"].get<double>());
    }
    if (j.contains("l1")) cfg.l1 = j["l1"].get<double>();
    if (j.contains("l2")) cfg.l2 = j["l2"].get<double>();
    if (j.contains("left_grid")) cfg.left_grid = parse_grid(j["left_grid"], "left_grid");
    if (j.contains("right_grid")) cfg.right_grid = parse_grid(j["right_grid"], "right_grid");
    if (j.contains("output")) cfg.output = j["output"].get<std::string>();
    if (j.contains("precision")) cfg.precision = j["precision"].get<int>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
}

struct TableWriter {
    std::ostringstream out;
    int precision;

    explicit TableWriter(int p) : precision(p) {}

    void row(const std::string& key, const std::string& value) {
        out << "  " << key;
        for (std::size_t i = key.size(); i < 22; ++i) out << ' ';
        out << value << '\n';
    }
    void num(const std::string& key, double value) { row(key, format_g(value, precision)); }
    void flag(const std::string& key, bool value) { row(key, value ? "true" : "false"); }
};

void print_outcome_rows(TableWriter& t, const tachy::Outcome& o) {
    const bool planar = o.detection1_lab.r.y != 0.0 || o.detection2_lab.r.y != 0.0;
    t.num("x1_S", o.detection1_preferred.r.x);
    if (planar) t.num("y1_S", o.detection1_preferred.r.y);
    t.num("t1_S", o.detection1_preferred.t);
    t.num("x2_S", o.detection2_preferred.r.x);
    if (planar) t.num("y2_S", o.detection2_preferred.r.y);
    t.num("t2_S", o.detection2_preferred.t);
    t.num("x1_lab", o.detection1_lab.r.x);
    if (planar) t.num("y1_lab", o.detection1_lab.r.y);
    t.num("t1_lab", o.detection1_lab.t);
    t.num("x2_lab", o.detection2_lab.r.x);
    if (planar) t.num("y2_lab", o.detection2_lab.r.y);
    t.num("t2_lab", o.detection2_lab.t);
    t.row("first_in_S", tachy::to_string(o.first_in_preferred));
    if (o.ftl_arrival) {
        t.num("tF_S", o.ftl_arrival->t);
    } else {
        t.row("tF_S", "no-arrival");
    }
    t.flag("correlated", o.correlated);
    t.row("order_class", tachy::to_string(o.order_class));
    t.num("s2", o.pair_interval.s2);
}

int cmd_scenario(const std::string& name, const RunConfig& cfg) {
    using namespace tachy;
    TableWriter t(cfg.precision);
    t.out << "scenario " << name << '\n';

    ExperimentConfig ecfg;
    ecfg.v = {cfg.v, 0, 0};

    if (name == "A" || name == "B") {
        ecfg.ftl = cfg.ftl_speed();
        ecfg.geometry = CollinearGeometry{cfg.l1, cfg.l2};
        const auto problems = ecfg.validate();
        if (!problems.empty()) {
            for (const auto& p : problems) std::cerr << "config error: " << p << '\n';
            return kExitConfigError;
        }
        const Outcome o = run_collinear(ecfg);
        t.num("v", cfg.v);
        t.num("gamma", Boost(ecfg.v).gamma());
        print_outcome_rows(t, o);

        if (o.ftl_arrival) {
            const Worldline partner = Worldline::from_vertices(
                {Event{0, {0, 0, 0}, Frame::Preferred}, o.partner_detection_preferred()});
            const LabNarrative n = induced_lab_narrative(FtlSignal{o.ftl_trigger, ecfg.ftl},
                                                         Boost(ecfg.v), partner);
            const Event forcing = boost_event(*o.ftl_arrival, Boost(ecfg.v));
            t.num("xF_lab", forcing.r.x);
            t.num("tF_lab", forcing.t);
            t.row("lab_narrative", to_string(n.kind));
            if (n.signal_speed) {
                t.num("lab_signal_distance", (n.second.r - n.first.r).norm());
                t.num("lab_signal_time", n.second.t - n.first.t);
                t.num("lab_signal_speed", *n.signal_speed);
            } else {
                t.row("lab_signal_speed", "instantaneous");
            }
            if (name == "B") {
                const double t2 = o.partner_detection_preferred().t;
                const bool boundary =
                    std::abs(o.ftl_arrival->t - t2) <= 1e-9 * std::max(1.0, std::abs(t2));
                t.flag("boundary", boundary);
            }
        }
    } else if (name == "C") {
        // For scenario C the speed option is the measured lab-frame
        // transverse speed u'_y; the preferred-frame speed is derived.
        const FtlSpeed lab_speed_value = cfg.ftl_speed();
        if (lab_speed_value.is_instantaneous()) {
            std::cerr << "config error: scenario C needs a finite --uy-prime\n";
            return kExitConfigError;
        }
        ecfg.geometry = TransverseGeometry{cfg.l1, cfg.l2};
        const auto problems = ecfg.validate();
        if (!problems.empty()) {
            for (const auto& p : problems) std::cerr << "config error: " << p << '\n';
            return kExitConfigError;
        }
        const TransverseResult r = run_transverse(ecfg, lab_speed_value.ubar());
        t.num("v", cfg.v);
        t.num("uy_prime", lab_speed_value.ubar());
        t.num("ubar_x", r.ubar_preferred.x);
        t.num("ubar_y", r.ubar_preferred.y);
        t.num("ubar", r.ubar);
        print_outcome_rows(t, r.outcome);
    } else {
        std::cerr << "config error: unknown scenario '" << name << "' (use A, B or C)\n";
        return kExitConfigError;
    }

    emit(t.out.str(), cfg.output);
    return kExitOk;
}

int cmd_sweep(const RunConfig& cfg) {
    using namespace tachy;
    ExperimentConfig base;
    base.v = {cfg.v, 0, 0};
    base.ftl = cfg.ftl_speed();
    base.geometry = CollinearGeometry{cfg.l1, cfg.l2};
    const auto problems = base.validate();
    if (!problems.empty()) {
        for (const auto& p : problems) std::cerr << "config error: " << p << '\n';
        return kExitConfigError;
    }
    if (cfg.left_grid.empty() || cfg.right_grid.empty()) {
        std::cerr << "config error: sweep needs non-empty left_grid and right_grid\n";
        return kExitConfigError;
    }
    const SweepTable table = detour_sweep(base, cfg.left_grid, cfg.right_grid, sweep_threads());
    std::ostringstream csv;
    table.write_csv(csv);
    emit(csv.str(), cfg.output);
    return kExitOk;
}

int cmd_recover(const RunConfig& cfg, const std::string& input,
                const std::optional<double>& synth_v, double synth_orientation,
                double synth_ubar, int synth_angles, double noise_sigma,
                const std::string& dump_measurements) {
    using namespace tachy;
    std::vector<DirectionalMeasurement> ms;
    if (synth_v) {
        const Velocity v{*synth_v * std::cos(synth_orientation),
                         *synth_v * std::sin(synth_orientation), 0.0};
        std::vector<double> phis;
        for (int k = 0; k < synth_angles; ++k) {
            phis.push_back(2.0 * M_PI * k / synth_angles);
        }
        auto fm = forward_measurements(v, FtlSpeed::finite(synth_ubar), phis);
        ms = std::move(fm.measurements);
        if (noise_sigma > 0.0) apply_multiplicative_noise(ms, noise_sigma, cfg.seed);
        if (!dump_measurements.empty()) {
            std::ostringstream csv;
            csv << "phi,u_prime,sigma\n";
            for (const auto& m : ms) {
                csv << format_g15(m.phi) << ',' << format_g15(m.u_prime) << ','
                    << (m.noise_sigma ? format_g15(*m.noise_sigma) : std::string()) << '\n';
            }
            write_atomically(dump_measurements, csv.str());
        }
    } else {
        if (input.empty()) {
            std::cerr << "config error: recover needs --input or --synthetic-v\n";
            return kExitConfigError;
        }
        std::ifstream in(input);
        if (!in) {
            std::cerr << "config error: cannot open " << input << '\n';
            return kExitConfigError;
        }
        ms = parse_measurements_csv(in);
    }

    try {
        const RecoveryResult r = recover_frame(ms);
        emit(recovery_to_json(r), cfg.output);
        return kExitOk;
    } catch (const NoConvergenceError& e) {
        std::cerr << "no convergence: " << e.what() << '\n';
        return kExitNoConvergence;
    } catch (const InsufficientDataError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfigError;
    }
}

bool parse_components(const std::string& text, std::vector<double>& out) {
    std::istringstream in(text);
    std::string cell;
    while (std::getline(in, cell, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(cell, &used));
            if (used != cell.size()) return false;
        } catch (const std::exception&) {
            return false;
        }
    }
    return !out.empty();
}

int cmd_transform(const std::string& event_text, const std::string& velocity_text,
                  const std::string& v_text, const std::string& to, int precision) {
    using namespace tachy;
    std::vector<double> vc;
    if (!parse_components(v_text, vc) || vc.size() > 3) {
        std::cerr << "config error: --v expects vx[,vy[,vz]]\n";
        return kExitConfigError;
    }
    vc.resize(3, 0.0);
    const Boost b({vc[0], vc[1], vc[2]});
    const bool to_lab = (to == "lab");

    TableWriter t(precision);
    if (!event_text.empty()) {
        std::vector<double> e;
        if (!parse_components(event_text, e) || e.size() > 4) {
            std::cerr << "config error: --event expects t,x[,y[,z]]\n";
            return kExitConfigError;
        }
        e.resize(4, 0.0);
        const Event in{e[0], {e[1], e[2], e[3]}, to_lab ? Frame::Preferred : Frame::Lab};
        const Event out = to_lab ? boost_event(in, b) : inverse_boost_event(in, b);
        t.row("frame", to_string(out.frame));
        t.num("t", out.t);
        t.num("x", out.r.x);
        t.num("y", out.r.y);
        t.num("z", out.r.z);
    } else if (!velocity_text.empty()) {
        std::vector<double> u;
        if (!parse_components(velocity_text, u) || u.size() > 3) {
            std::cerr << "config error: --velocity expects ux[,uy[,uz]]\n";
            return kExitConfigError;
        }
        u.resize(3, 0.0);
        const auto out = to_lab ? compose_velocity_to_lab({u[0], u[1], u[2]}, b)
                                : compose_velocity_to_preferred({u[0], u[1], u[2]}, b);
        t.row("frame", to_lab ? "lab" : "preferred");
        if (!out) {
            t.row("velocity", "divergent (instantaneous in the target frame)");
        } else {
            t.num("ux", out->x);
            t.num("uy", out->y);
            t.num("uz", out->z);
            t.num("speed", out->norm());
        }
    } else {
        std::cerr << "config error: transform needs --event or --velocity\n";
        return kExitConfigError;
    }
    std::cout << t.out.str();
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"preferred-frame FTL signaling simulator"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_path;

    auto* scenario = app.add_subcommand("scenario", "run scenario A, B or C");
    std::string scenario_name;
    scenario->add_option("name", scenario_name, "A, B or C")->required();
    double opt_l = 0.0;
    scenario->add_option("--config", config_path, "flat JSON config file");
    auto* sc_v = scenario->add_option("--v", cfg.v, "lab speed relative to the preferred frame");
    auto* sc_l = scenario->add_option("--l", opt_l, "detector distance (sets l1 = l2)");
    auto* sc_l1 = scenario->add_option("--l1", cfg.l1, "nu1 detector distance");
    auto* sc_l2 = scenario->add_option("--l2", cfg.l2, "nu2 detector distance");
    auto* sc_ftl = scenario->add_option("--ftl", cfg.ftl, "front speed: 'inf' or a number > 1");
    auto* sc_ubar = scenario->add_option("--ubar", cfg.ftl, "alias for --ftl with a number");
    auto* sc_uy = scenario->add_option("--uy-prime", cfg.ftl,
                                       "scenario C: measured transverse lab speed");
    auto* sc_out = scenario->add_option("--output", cfg.output, "write the table here");
    auto* sc_prec = scenario->add_option("--precision", cfg.precision, "significant digits");

    auto* sweep = app.add_subcommand("sweep", "detour-length sweep, CSV output");
    sweep->add_option("--config", config_path, "flat JSON config file");
    auto* sw_v = sweep->add_option("--v", cfg.v, "lab speed");
    auto* sw_l1 = sweep->add_option("--l1", cfg.l1, "nu1 detector distance");
    auto* sw_l2 = sweep->add_option("--l2", cfg.l2, "nu2 detector distance");
    auto* sw_ftl = sweep->add_option("--ftl", cfg.ftl, "front speed: 'inf' or a number > 1");
    auto* sw_out = sweep->add_option("--output", cfg.output, "write the CSV here");

    auto* recover = app.add_subcommand("recover", "frame recovery from directional speeds");
    std::string recover_input, dump_measurements;
    std::optional<double> synth_v;
    double synth_orientation = 0.0, synth_ubar = 10.0, noise_sigma = 0.0;
    int synth_angles = 8;
    recover->add_option("--config", config_path, "flat JSON config file");
    recover->add_option("--input", recover_input, "measurements CSV (phi,u_prime[,sigma])");
    recover->add_option("--synthetic-v", synth_v, "generate measurements for this true speed");
    recover->add_option("--synthetic-orientation", synth_orientation, "true orientation (rad)");
    recover->add_option("--synthetic-ubar", synth_ubar, "true preferred-frame front speed");
    recover->add_option("--angles", synth_angles, "number of equally spaced rays")
        ->check(CLI::Range(3, 4096));
    recover->add_option("--noise", noise_sigma, "multiplicative noise sigma");
    auto* rc_seed = recover->add_option("--seed", cfg.seed, "noise seed");
    recover->add_option("--dump-measurements", dump_measurements,
                        "also write the synthetic measurements CSV here");
    auto* rc_out = recover->add_option("--output", cfg.output, "write the JSON here");

    auto* transform = app.add_subcommand("transform", "boost an event or compose a velocity");
    std::string event_text, velocity_text, v_text = "0", to = "lab";
    transform->add_option("--event", event_text, "t,x[,y[,z]]");
    transform->add_option("--velocity", velocity_text, "ux[,uy[,uz]]");
    transform->add_option("--v", v_text, "boost velocity vx[,vy[,vz]]")->required();
    transform->add_option("--to", to, "lab or preferred")
        ->check(CLI::IsMember({"lab", "preferred"}));
    auto* tf_prec = transform->add_option("--precision", cfg.precision, "significant digits");

    CLI11_PARSE(app, argc, argv);

    try {
        // File values first, then the flags that were actually given.
        if (!config_path.empty()) {
            RunConfig file_cfg;
            load_config_file(config_path, file_cfg);
            const RunConfig flag_cfg = cfg;
            cfg = file_cfg;
            if (sc_v->count() || sw_v->count()) cfg.v = flag_cfg.v;
            if (sc_l1->count() || sw_l1->count()) cfg.l1 = flag_cfg.l1;
            if (sc_l2->count() || sw_l2->count()) cfg.l2 = flag_cfg.l2;
            if (sc_ftl->count() || sc_ubar->count() || sc_uy->count() || sw_ftl->count()) {
                cfg.ftl = flag_cfg.ftl;
            }
            if (sc_out->count() || sw_out->count() || rc_out->count()) {
                cfg.output = flag_cfg.output;
            }
            if (sc_prec->count() || tf_prec->count()) cfg.precision = flag_cfg.precision;
            if (rc_seed->count()) cfg.seed = flag_cfg.seed;
        }
        if (sc_l->count()) {
            cfg.l1 = opt_l;
            cfg.l2 = opt_l;
        }
        if (cfg.precision < 1 || cfg.precision > 17) {
            std::cerr << "config error: precision must be in [1, 17]\n";
            return kExitConfigError;
        }

        if (scenario->parsed()) return cmd_scenario(scenario_name, cfg);
        if (sweep->parsed()) return cmd_sweep(cfg);
        if (recover->parsed()) {
            return cmd_recover(cfg, recover_input, synth_v, synth_orientation, synth_ubar,
                               synth_angles, noise_sigma, dump_measurements);
        }
        if (transform->parsed()) {
            return cmd_transform(event_text, velocity_text, v_text, to, cfg.precision);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfigError;
    }
    return kExitOk;
}
