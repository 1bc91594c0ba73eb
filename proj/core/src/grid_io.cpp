#include "coefrec/grid_io.hpp"

#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "coefrec/error.hpp"

namespace coefrec {

namespace fs = std::filesystem;

namespace {

fs::path meta_path(const fs::path& csv_path) {
    fs::path p = csv_path;
    p.replace_extension(".json");
    return p;
}

}  // namespace

void write_grid(const fs::path& csv_path, const GridFunction& u, const std::string& field,
                std::optional<double> time) {
    const Mesh& mesh = u.mesh();
    std::ofstream out(csv_path);
    if (!out) {
        throw IoError("cannot open " + csv_path.string() + " for writing");
    }
    out << (mesh.dim() == 1 ? "x,value\n" : "x,y,value\n");
    char buf[96];
    for (std::size_t i = 0; i < mesh.node_count(); ++i) {
        const auto& p = mesh.node(i);
        if (mesh.dim() == 1) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p[0], u[i]);
        } else {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p[0], p[1], u[i]);
        }
        out << buf;
    }
    if (!out) {
        throw IoError("write failed for " + csv_path.string());
    }

    nlohmann::ordered_json meta;
    meta["dim"] = mesh.dim();
    meta["n"] = mesh.n();
    meta["field"] = field;
    if (time) {
        meta["time"] = *time;
    }
    const auto mp = meta_path(csv_path);
    std::ofstream mout(mp);
    if (!mout) {
        throw IoError("cannot open " + mp.string() + " for writing");
    }
    mout << meta.dump(2) << '\n';
}

GridDump read_grid(const fs::path& csv_path) {
    const auto mp = meta_path(csv_path);
    std::ifstream min(mp);
    if (!min) {
        throw IoError("cannot open " + mp.string());
    }
    nlohmann::json meta;
    try {
        min >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed metadata in " + mp.string() + ": " + e.what());
    }
    const int dim = meta.at("dim").get<int>();
    const int n = meta.at("n").get<int>();
    auto mesh = build_mesh(dim, n);

    std::ifstream in(csv_path);
    if (!in) {
        throw IoError("cannot open " + csv_path.string());
    }
    std::string line;
    std::getline(in, line);
    std::vector<double> values;
    values.reserve(mesh->node_count());
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto comma = line.rfind(',');
        if (comma == std::string::npos) {
            throw IoError("malformed row in " + csv_path.string());
        }
        values.push_back(std::stod(line.substr(comma + 1)));
    }
    if (values.size() != mesh->node_count()) {
        std::ostringstream os;
        os << csv_path.string() << ": expected " << mesh->node_count() << " rows, found " << values.size();
        throw IoError(os.str());
    }
    GridDump d{GridFunction(mesh, std::move(values)), meta.value("field", std::string{}), std::nullopt};
    if (meta.contains("time")) {
        d.time = meta["time"].get<double>();
    }
    return d;
}

}  // namespace coefrec
