#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "stirk/dynamics.hpp"
#include "stirk/errors.hpp"
#include "stirk/io.hpp"
#include "stirk/rng.hpp"

using namespace stirk;

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("stirk_io_test_" + std::to_string(Rng(0).next_u64()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Trajectory sample_trajectory() {
    const SystemSpec sys = make_vdp();
    Rng rng(401);
    Trajectory traj = simulate(sys, rng.normal_vector(2), rng.normal_matrix(12, 1));
    traj.seed = 777;
    traj.noise_sigma = 0.0599;
    TrajectoryProvenance prov;
    prov.round = 2;
    prov.ic_index = 5;
    prov.task = "seen";
    traj.provenance = prov;
    return traj;
}

}  // namespace

TEST_CASE("trajectory files round-trip") {
    TempDir tmp;
    const SystemSpec sys = make_vdp();
    const Trajectory traj = sample_trajectory();
    const std::string csv = (tmp.path / "traj_0.csv").string();
    write_trajectory(traj, sys, csv, "beefcafe01234567");

    SUBCASE("states, inputs and metadata survive bit for bit") {
        const TrajectoryFile back = read_trajectory(csv);
        CHECK(back.trajectory.states == traj.states);
        CHECK(back.trajectory.inputs == traj.inputs);
        CHECK(back.trajectory.dt == traj.dt);
        CHECK(back.trajectory.seed == 777);
        CHECK(back.trajectory.noise_sigma == 0.0599);
        CHECK(back.system_name == "vdp");
        CHECK(back.system_params.at("mu") == 1.0);
        CHECK(back.config_hash == "beefcafe01234567");
        REQUIRE(back.trajectory.provenance.has_value());
        CHECK(back.trajectory.provenance->round == 2);
        CHECK(back.trajectory.provenance->ic_index == 5);
        CHECK(back.trajectory.provenance->task == "seen");
    }

    SUBCASE("the csv has the documented layout") {
        std::ifstream in(csv);
        std::string header;
        std::getline(in, header);
        CHECK(header == "t,x1,x2,u1");
        std::string first;
        std::getline(in, first);
        CHECK(first.substr(0, 2) == "0,");
        int rows = 1;
        std::string line, last;
        last = first;
        while (std::getline(in, line))
            if (!line.empty()) {
                ++rows;
                last = line;
            }
        CHECK(rows == 13);  // 12 steps -> 13 states
        // Terminal row has an empty input cell.
        CHECK(last.back() == ',');
    }

    SUBCASE("the sidecar carries schema and system metadata") {
        std::ifstream side(csv + ".json");
        REQUIRE(side.good());
        std::stringstream buf;
        buf << side.rdbuf();
        const std::string text = buf.str();
        CHECK(text.find("schema_version") != std::string::npos);
        CHECK(text.find("\"vdp\"") != std::string::npos);
        CHECK(text.find("beefcafe01234567") != std::string::npos);
    }
}

TEST_CASE("trajectory without provenance omits it") {
    TempDir tmp;
    const SystemSpec sys = make_vdp();
    Rng rng(409);
    Trajectory traj = simulate(sys, rng.normal_vector(2), rng.normal_matrix(3, 1));
    const std::string csv = (tmp.path / "plain.csv").string();
    write_trajectory(traj, sys, csv, "");
    const TrajectoryFile back = read_trajectory(csv);
    CHECK_FALSE(back.trajectory.provenance.has_value());
    CHECK(back.trajectory.states == traj.states);
}

TEST_CASE("malformed trajectory files are parse errors") {
    TempDir tmp;
    const SystemSpec sys = make_vdp();
    const Trajectory traj = sample_trajectory();
    const std::string csv = (tmp.path / "traj.csv").string();
    write_trajectory(traj, sys, csv, "f00d");

    SUBCASE("missing csv") {
        CHECK_THROWS_AS((void)read_trajectory((tmp.path / "nope.csv").string()), ParseError);
    }

    SUBCASE("missing sidecar") {
        fs::remove(csv + ".json");
        CHECK_THROWS_AS((void)read_trajectory(csv), ParseError);
    }

    SUBCASE("wrong field count") {
        std::ofstream out(csv, std::ios::app);
        out << "13,1.0\n";
        out.close();
        CHECK_THROWS_AS((void)read_trajectory(csv), ParseError);
    }

    SUBCASE("non-numeric cell") {
        std::string text;
        {
            std::ifstream in(csv);
            std::stringstream buf;
            buf << in.rdbuf();
            text = buf.str();
        }
        const auto at = text.find("0,");
        text.replace(at, 2, "x,");
        std::ofstream out(csv, std::ios::trunc);
        out << text;
        out.close();
        CHECK_THROWS_AS((void)read_trajectory(csv), ParseError);
    }

    SUBCASE("corrupt sidecar json") {
        std::ofstream out(csv + ".json", std::ios::trunc);
        out << "{ not json";
        out.close();
        CHECK_THROWS_AS((void)read_trajectory(csv), ParseError);
    }
}
