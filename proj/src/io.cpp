#include "stirk/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stirk/errors.hpp"
#include "stirk/util.hpp"

namespace stirk {

namespace {

double parse_double(const std::string& field, const std::string& context) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc() || res.ptr != last)
        throw ParseError("bad number '" + field + "' in " + context);
    return value;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace

void write_trajectory(const Trajectory& traj, const SystemSpec& system,
                      const std::string& csv_path, const std::string& config_hash) {
    const long n = traj.states.cols();
    const long m = traj.inputs.cols();
    const long T = traj.inputs.rows();
    if (traj.states.rows() != T + 1)
        throw DimensionError("write_trajectory: states must have one more row than inputs");

    std::ofstream out(csv_path);
    if (!out) throw Error("cannot open " + csv_path + " for writing");
    out << "t";
    for (long i = 1; i <= n; ++i) out << ",x" << i;
    for (long i = 1; i <= m; ++i) out << ",u" << i;
    out << '\n';
    for (long k = 0; k <= T; ++k) {
        out << format_double(static_cast<double>(k) * traj.dt);
        for (long i = 0; i < n; ++i) out << ',' << format_double(traj.states(k, i));
        for (long i = 0; i < m; ++i) {
            out << ',';
            if (k < T) out << format_double(traj.inputs(k, i));
        }
        out << '\n';
    }
    if (!out) throw Error("write failed for " + csv_path);

    nlohmann::json meta{{"schema_version", 1},
                        {"system", system.name},
                        {"dt", traj.dt},
                        {"seed", traj.seed},
                        {"noise_sigma", traj.noise_sigma},
                        {"params", system.params},
                        {"config_hash", config_hash}};
    if (traj.provenance) {
        meta["provenance"] = {{"round", traj.provenance->round},
                              {"ic_index", traj.provenance->ic_index},
                              {"task", traj.provenance->task}};
    }
    std::ofstream side(csv_path + ".json");
    if (!side) throw Error("cannot open " + csv_path + ".json for writing");
    side << meta.dump(2) << '\n';
    if (!side) throw Error("write failed for " + csv_path + ".json");
}

TrajectoryFile read_trajectory(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw ParseError("cannot open " + csv_path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(csv_path + ": empty file");

    const std::vector<std::string> header = split_csv(line);
    if (header.empty() || header[0] != "t")
        throw ParseError(csv_path + ": header must start with t");
    long n = 0, m = 0;
    for (std::size_t i = 1; i < header.size(); ++i) {
        if (!header[i].empty() && header[i][0] == 'x' && m == 0)
            ++n;
        else if (!header[i].empty() && header[i][0] == 'u')
            ++m;
        else
            throw ParseError(csv_path + ": unexpected column '" + header[i] + "'");
    }
    if (n == 0) throw ParseError(csv_path + ": no state columns");

    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<Vec> inputs;
    long row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv(line);
        if (static_cast<long>(fields.size()) != 1 + n + m)
            throw ParseError(csv_path + ": row " + std::to_string(row) + " has " +
                             std::to_string(fields.size()) + " fields");
        const std::string ctx = csv_path + " row " + std::to_string(row);
        times.push_back(parse_double(fields[0], ctx));
        Vec x(n);
        for (long i = 0; i < n; ++i) x[i] = parse_double(fields[1 + i], ctx);
        states.push_back(std::move(x));
        bool has_input = m > 0 && !fields[1 + n].empty();
        if (has_input) {
            Vec u(m);
            for (long i = 0; i < m; ++i) u[i] = parse_double(fields[1 + n + i], ctx);
            inputs.push_back(std::move(u));
        }
    }
    if (states.empty()) throw ParseError(csv_path + ": no data rows");
    if (m > 0 && static_cast<long>(inputs.size()) != static_cast<long>(states.size()) - 1)
        throw ParseError(csv_path + ": expected " + std::to_string(states.size() - 1) +
                         " input rows, found " + std::to_string(inputs.size()));

    TrajectoryFile file;
    Trajectory& traj = file.trajectory;
    traj.states.resize(static_cast<long>(states.size()), n);
    for (std::size_t k = 0; k < states.size(); ++k) traj.states.row(static_cast<long>(k)) = states[k].transpose();
    traj.inputs.resize(static_cast<long>(inputs.size()), m);
    for (std::size_t k = 0; k < inputs.size(); ++k) traj.inputs.row(static_cast<long>(k)) = inputs[k].transpose();
    traj.dt = times.size() > 1 ? times[1] - times[0] : 0.0;

    std::ifstream side(csv_path + ".json");
    if (!side) throw ParseError("missing sidecar " + csv_path + ".json");
    {
        try {
            nlohmann::json meta = nlohmann::json::parse(side);
            file.system_name = meta.value("system", std::string());
            traj.dt = meta.value("dt", traj.dt);
            traj.seed = meta.value("seed", std::uint64_t{0});
            traj.noise_sigma = meta.value("noise_sigma", 0.0);
            file.config_hash = meta.value("config_hash", std::string());
            if (meta.contains("params"))
                file.system_params =
                    meta.at("params").get<std::map<std::string, double>>();
            if (meta.contains("provenance")) {
                const auto& p = meta.at("provenance");
                traj.provenance = TrajectoryProvenance{
                    p.value("round", 0), p.value("ic_index", 0), p.value("task", std::string())};
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(csv_path + ".json: " + e.what());
        }
    }
    return file;
}

}  // namespace stirk
