#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "coefrec/error.hpp"
#include "coefrec/experiments.hpp"
#include "coefrec/grid_io.hpp"

namespace coefrec {

namespace {

constexpr const char* kHeader =
    "example,delta,seed,e_D,e_sigma,e_sigma_interior,iters_q,iters_sigma,J_final_q,J_final_sigma,wall_ms,fine_n,"
    "tau_data,preset,status";

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) {
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

bool ok(const ResultRow& r) { return r.status == "ok" || r.status.rfind("stall", 0) == 0; }

std::string delta_tag(double d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", d);
    return buf;
}

}  // namespace

double estimate_rate(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.size() < 2) {
        throw InvalidArgument("estimate_rate: need at least two (delta, error) pairs");
    }
    double sx = 0.0;
    double sy = 0.0;
    for (const auto& [d, e] : pairs) {
        if (!(d > 0.0) || !(e > 0.0)) {
            throw InvalidArgument("estimate_rate: deltas and errors must be positive");
        }
        sx += std::log(d);
        sy += std::log(e);
    }
    const double n = static_cast<double>(pairs.size());
    const double mx = sx / n;
    const double my = sy / n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (const auto& [d, e] : pairs) {
        const double dx = std::log(d) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(e) - my);
    }
    if (sxx <= 0.0) {
        throw InvalidArgument("estimate_rate: deltas must not all be equal");
    }
    return sxy / sxx;
}

std::vector<SeedMean> seed_means(const std::vector<ResultRow>& rows, const std::string& example) {
    std::map<double, std::vector<const ResultRow*>> groups;
    for (const auto& r : rows) {
        if (r.example == example && ok(r)) {
            groups[r.delta].push_back(&r);
        }
    }
    std::vector<SeedMean> out;
    for (const auto& [delta, g] : groups) {
        SeedMean m;
        m.delta = delta;
        m.count = static_cast<int>(g.size());
        for (const auto* r : g) {
            m.e_D += r->e_D;
            m.e_sigma += r->e_sigma;
        }
        m.e_D /= m.count;
        m.e_sigma /= m.count;
        if (m.count > 1) {
            for (const auto* r : g) {
                m.sd_D += (r->e_D - m.e_D) * (r->e_D - m.e_D);
                m.sd_sigma += (r->e_sigma - m.e_sigma) * (r->e_sigma - m.e_sigma);
            }
            m.sd_D = std::sqrt(m.sd_D / (m.count - 1));
            m.sd_sigma = std::sqrt(m.sd_sigma / (m.count - 1));
        }
        out.push_back(m);
    }
    return out;
}

nlohmann::ordered_json rates_json(const std::vector<ResultRow>& rows) {
    std::vector<std::string> examples;
    for (const auto& r : rows) {
        if (std::find(examples.begin(), examples.end(), r.example) == examples.end()) {
            examples.push_back(r.example);
        }
    }
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& ex : examples) {
        std::vector<std::pair<double, double>> d_pairs;
        std::vector<std::pair<double, double>> s_pairs;
        nlohmann::ordered_json means = nlohmann::ordered_json::array();
        for (const auto& m : seed_means(rows, ex)) {
            if (m.delta > 0.0 && m.e_D > 0.0) {
                d_pairs.push_back({m.delta, m.e_D});
            }
            if (m.delta > 0.0 && m.e_sigma > 0.0) {
                s_pairs.push_back({m.delta, m.e_sigma});
            }
            means.push_back({{"delta", m.delta},
                             {"e_D", m.e_D},
                             {"e_sigma", m.e_sigma},
                             {"sd_D", m.sd_D},
                             {"sd_sigma", m.sd_sigma},
                             {"seeds", m.count}});
        }
        nlohmann::ordered_json e;
        e["e_D"] = d_pairs.size() >= 2 ? nlohmann::ordered_json(estimate_rate(d_pairs)) : nlohmann::ordered_json(nullptr);
        e["e_sigma"] = s_pairs.size() >= 2 ? nlohmann::ordered_json(estimate_rate(s_pairs)) : nlohmann::ordered_json(nullptr);
        e["means"] = means;
        out[ex] = e;
    }
    return out;
}

void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
    std::ofstream os(path);
    if (!os) {
        throw IoError("cannot write " + path.string());
    }
    os << kHeader << '\n';
    for (const auto& r : rows) {
        os << r.example << ',' << num(r.delta) << ',' << r.seed << ',' << num(r.e_D) << ',' << num(r.e_sigma) << ','
           << num(r.e_sigma_interior) << ',' << r.iters_q << ',' << r.iters_sigma << ',' << num(r.J_final_q) << ','
           << num(r.J_final_sigma) << ',' << num(r.wall_ms) << ',' << r.fine_n << ',' << num(r.tau_data) << ','
           << r.preset << ',' << r.status << '\n';
    }
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw IoError("cannot read " + path.string());
    }
    std::string line;
    if (!std::getline(is, line) || line != kHeader) {
        throw IoError(path.string() + ": unexpected header");
    }
    std::vector<ResultRow> rows;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        const auto c = split_csv(line);
        if (c.size() != 15) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 15 columns");
        }
        try {
            ResultRow r;
            r.example = c[0];
            r.delta = std::stod(c[1]);
            r.seed = std::stoull(c[2]);
            r.e_D = std::stod(c[3]);
            r.e_sigma = std::stod(c[4]);
            r.e_sigma_interior = std::stod(c[5]);
            r.iters_q = std::stoi(c[6]);
            r.iters_sigma = std::stoi(c[7]);
            r.J_final_q = std::stod(c[8]);
            r.J_final_sigma = std::stod(c[9]);
            r.wall_ms = std::stod(c[10]);
            r.fine_n = std::stoi(c[11]);
            r.tau_data = std::stod(c[12]);
            r.preset = c[13];
            r.status = c[14];
            rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
        }
    }
    return rows;
}

void emit(const ExperimentOutput& out, const RunConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_results_csv(dir / "results.csv", out.rows);
    {
        std::ofstream os(dir / "rates.json");
        os << rates_json(out.rows).dump(2) << '\n';
    }
    nlohmann::ordered_json manifest;
    manifest["config"] = config_to_json(cfg);
    manifest["gamma"] = out.gamma;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& r : out.rows) {
        const auto& p = r.params;
        rows.push_back({{"delta", r.delta},
                        {"seed", r.seed},
                        {"n_h", p.n_h},
                        {"n_H", p.n_H},
                        {"tau", p.tau},
                        {"alpha1", p.alpha1},
                        {"alpha2", p.alpha2},
                        {"gamma", p.gamma}});
    }
    manifest["rows"] = rows;
    {
        std::ofstream os(dir / "manifest.json");
        os << manifest.dump(2) << '\n';
    }
    if (out.reconstructions.empty()) {
        return;
    }
    const auto grids = dir / "grids";
    std::filesystem::create_directories(grids);
    for (const auto& rec : out.reconstructions) {
        const std::string stem = rec.row.example + "_d" + delta_tag(rec.row.delta) + "_s" + std::to_string(rec.row.seed);
        write_grid(grids / (stem + "_D.csv"), rec.D, "D");
        write_grid(grids / (stem + "_sigma.csv"), rec.sigma, "sigma");
        write_grid(grids / (stem + "_q.csv"), rec.q, "q");
        rec.log_q.write_csv(grids / (stem + "_log_q.csv"));
        rec.log_sigma.write_csv(grids / (stem + "_log_sigma.csv"));
    }
}

}  // namespace coefrec
