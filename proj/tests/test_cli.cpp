#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#ifndef TACHY_CLI_PATH
#error "TACHY_CLI_PATH must point at the built binary"
#endif

namespace {

namespace fs = std::filesystem;

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() /
                     ("tachy_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

RunResult run_cli(const std::string& args, const std::string& env_prefix = "") {
    const fs::path out_file = scratch_dir() / "stdout.txt";
    const fs::path err_file = scratch_dir() / "stderr.txt";
    const std::string cmd = env_prefix + std::string(TACHY_CLI_PATH) + " " + args + " > " +
                            out_file.string() + " 2> " + err_file.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = (status >= 0 && (status & 0x7f) == 0) ? (status >> 8) & 0xff : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

}  // namespace

TEST_CASE("scenario A prints the instantaneous-forcing table") {
    const auto r = run_cli("scenario A --v 0.6 --l 1 --ftl inf");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("xF_lab                0.25") != std::string::npos);
    CHECK(r.out.find("lab_signal_speed      1.66666666666667") != std::string::npos);
    CHECK(r.out.find("correlated            true") != std::string::npos);
}

TEST_CASE("scenario B flags the exact boundary") {
    const auto r = run_cli("scenario B --v 0.5 --ubar 2 --l 1");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("boundary              true") != std::string::npos);
    CHECK(r.out.find("simultaneous, instantly connected") != std::string::npos);
}

TEST_CASE("scenario C reports the preferred-frame front speed") {
    const auto r = run_cli("scenario C --v 0.6 --uy-prime 5");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("ubar                  4.04474968323134") != std::string::npos);
    CHECK(r.out.find("ubar_x                0.6") != std::string::npos);
    CHECK(r.out.find("y1_S") != std::string::npos);
}

TEST_CASE("invalid configuration exits with code 2 and reports every problem") {
    const auto r = run_cli("scenario A --v 1.5 --l1 -1 --ftl inf");
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("v:") != std::string::npos);
    CHECK(r.err.find("l1:") != std::string::npos);
}

TEST_CASE("sweep: config file, determinism, thread independence") {
    const fs::path dir = scratch_dir();
    const fs::path config = dir / "sweep.json";
    const fs::path out1 = dir / "sweep1.csv";
    const fs::path out2 = dir / "sweep2.csv";
    {
        std::ofstream c(config);
        c << R"({"v": 0.6, "ftl": 2.0, "l1": 1.0, "l2": 1.0,
                 "left_grid": {"start": 0, "stop": 3, "count": 12},
                 "right_grid": {"start": 0, "stop": 3, "count": 15}})";
    }

    const auto r1 = run_cli("sweep --config " + config.string() + " --output " + out1.string(),
                            "TACHY_THREADS=1 ");
    CHECK(r1.exit_code == 0);
    const auto r2 = run_cli("sweep --config " + config.string() + " --output " + out2.string(),
                            "TACHY_THREADS=2 ");
    CHECK(r2.exit_code == 0);

    const std::string csv1 = slurp(out1);
    const std::string csv2 = slurp(out2);
    CHECK(!csv1.empty());
    CHECK(csv1 == csv2);  // byte-identical regardless of parallelism
    CHECK(csv1.rfind("delta_left,delta_right,order_class,correlated,s2,t1_S,t2_S,tF_S\n", 0) == 0);
    // 12 x 15 grid plus header
    CHECK(std::count(csv1.begin(), csv1.end(), '\n') == 12 * 15 + 1);
}

TEST_CASE("recover: synthetic round trip and determinism under a seed") {
    const fs::path dir = scratch_dir();
    const fs::path out1 = dir / "rec1.json";
    const fs::path out2 = dir / "rec2.json";
    const std::string args =
        "recover --synthetic-v 0.6 --synthetic-orientation 0.7 --synthetic-ubar 10 "
        "--angles 8 --noise 1e-4 --seed 42 --output ";
    CHECK(run_cli(args + out1.string()).exit_code == 0);
    CHECK(run_cli(args + out2.string()).exit_code == 0);
    const std::string json = slurp(out1);
    CHECK(json == slurp(out2));
    CHECK(json.find("\"identifiable\": true") != std::string::npos);
    CHECK(json.find("\"speed\": 0.60") != std::string::npos);  // within noise of 0.6
}

TEST_CASE("recover: insufficient and inconsistent data exit codes") {
    const fs::path dir = scratch_dir();
    const fs::path small_csv = dir / "small.csv";
    {
        std::ofstream c(small_csv);
        c << "phi,u_prime\n0.0,5.0\n1.0,6.0\n";
    }
    CHECK(run_cli("recover --input " + small_csv.string()).exit_code == 2);

    const fs::path junk_csv = dir / "junk.csv";
    {
        std::ofstream c(junk_csv);
        c << "phi,u_prime\n0.0,10\n1.0,2\n2.0,30\n3.0,4\n4.0,17\n";
    }
    CHECK(run_cli("recover --input " + junk_csv.string()).exit_code == 3);
}

TEST_CASE("transform: events and velocities both ways") {
    auto r = run_cli("transform --event 2,2 --v 0.6 --to lab");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("t                     1\n") != std::string::npos);
    CHECK(r.out.find("x                     1\n") != std::string::npos);

    r = run_cli("transform --velocity 5,0,0 --v 0.5 --to preferred");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("ux                    1.57142857142857") != std::string::npos);

    r = run_cli("transform --velocity 2,0,0 --v 0.5 --to lab");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("divergent") != std::string::npos);
}

TEST_CASE("flags override config file values") {
    const fs::path dir = scratch_dir();
    const fs::path config = dir / "scenario.json";
    {
        std::ofstream c(config);
        c << R"({"v": 0.5, "ftl": "inf", "l1": 1.0, "l2": 1.0})";
    }
    const auto r = run_cli("scenario A --config " + config.string() + " --v 0.6");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("v                     0.6") != std::string::npos);
    CHECK(r.out.find("gamma                 1.25") != std::string::npos);
}
