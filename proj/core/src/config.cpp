#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "coefrec/error.hpp"
#include "coefrec/experiments.hpp"

namespace coefrec {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ordered_json step_to_json(const InverseStepConfig& s) {
    ordered_json j;
    j["max_iters"] = s.max_iters;
    j["grad_tol"] = s.grad_tol;
    j["obj_decrease_tol"] = s.obj_decrease_tol;
    j["armijo_c"] = s.linesearch.armijo_c;
    j["shrink"] = s.linesearch.shrink;
    j["max_backtracks"] = s.linesearch.max_backtracks;
    j["solve_tol"] = s.solve.tol;
    return j;
}

void step_from_json(const json& j, InverseStepConfig& s) {
    s.max_iters = j.value("max_iters", s.max_iters);
    s.grad_tol = j.value("grad_tol", s.grad_tol);
    s.obj_decrease_tol = j.value("obj_decrease_tol", s.obj_decrease_tol);
    s.linesearch.armijo_c = j.value("armijo_c", s.linesearch.armijo_c);
    s.linesearch.shrink = j.value("shrink", s.linesearch.shrink);
    s.linesearch.max_backtracks = j.value("max_backtracks", s.linesearch.max_backtracks);
    s.solve.tol = j.value("solve_tol", s.solve.tol);
}

Box box_from_json(const json& j, const Box& fallback) {
    if (j.is_null()) {
        return fallback;
    }
    if (!j.is_array() || j.size() != 2) {
        throw InvalidArgument("box must be a [lower, upper] pair");
    }
    return Box(j[0].get<double>(), j[1].get<double>());
}

RunConfig defaults_for(const ExampleSpec& ex) {
    RunConfig c;
    c.example = ex;
    c.positivity_floor = 0.5 * ex.boundary_lower;
    c.step_q.max_iters = 3000;
    c.step_q.grad_tol = 1e-12;
    c.step_q.obj_decrease_tol = 1e-12;
    c.step_q.solve.tol = 1e-12;
    c.step_sigma = c.step_q;
    return c;
}

// Visits every leaf of doc with its dotted path.
void collect_leaves(const ordered_json& doc, const std::string& prefix, std::vector<std::string>& out) {
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it->is_object()) {
            collect_leaves(*it, path, out);
        } else {
            out.push_back(path);
        }
    }
}

}  // namespace

ordered_json config_to_json(const RunConfig& cfg) {
    const auto& ex = cfg.example;
    ordered_json j;
    j["example"] = ex.id;
    j["preset"] = cfg.quick ? "quick" : "full";
    ordered_json data;
    data["fine_n"] = ex.fine_n;
    data["tau_data"] = ex.tau_data;
    data["obs_n"] = cfg.obs_n;
    data["transfer"] = cfg.transfer;
    data["positivity_floor"] = cfg.positivity_floor;
    data["forward_tol"] = cfg.forward_solve.tol;
    j["data"] = data;
    j["boxes"] = {{"q", {ex.box_q.lower, ex.box_q.upper}},
                  {"D", {ex.box_D.lower, ex.box_D.upper}},
                  {"sigma", {ex.box_sigma.lower, ex.box_sigma.upper}}};
    const auto& p = ex.policy;
    ordered_json sc;
    sc["delta0"] = p.delta0;
    sc["h0"] = p.h0;
    sc["H0"] = p.H0;
    sc["tau0"] = p.tau0;
    sc["alpha1_0"] = p.alpha1_0;
    sc["alpha2_0"] = p.alpha2_0;
    sc["k"] = p.k;
    sc["gamma"] = p.gamma ? ordered_json(*p.gamma) : ordered_json(nullptr);
    sc["gamma_fallback"] = p.gamma_fallback;
    j["scaling"] = sc;
    j["step_q"] = step_to_json(cfg.step_q);
    j["step_sigma"] = step_to_json(cfg.step_sigma);
    j["coupled"] = {{"outer_iters", cfg.coupled_outer}, {"inner_iters", cfg.coupled_inner}};
    j["interior_distance"] = cfg.interior_distance;
    j["deltas"] = ex.deltas;
    j["timings"] = cfg.timings;
    return j;
}

ordered_json default_config(const std::string& example_id) {
    return config_to_json(defaults_for(builtin_example(example_id)));
}

RunConfig config_from_json(const json& doc) {
    if (!doc.is_object() || !doc.contains("example")) {
        throw InvalidArgument("config must be an object with an \"example\" key");
    }
    RunConfig c = defaults_for(builtin_example(doc.at("example").get<std::string>()));
    auto& ex = c.example;
    try {
        c.quick = doc.value("preset", std::string("full")) == "quick";
        if (doc.contains("data")) {
            const auto& d = doc["data"];
            ex.fine_n = d.value("fine_n", ex.fine_n);
            ex.tau_data = d.value("tau_data", ex.tau_data);
            c.obs_n = d.value("obs_n", c.obs_n);
            c.transfer = d.value("transfer", c.transfer);
            c.positivity_floor = d.value("positivity_floor", c.positivity_floor);
            c.forward_solve.tol = d.value("forward_tol", c.forward_solve.tol);
        }
        if (doc.contains("boxes")) {
            const auto& b = doc["boxes"];
            ex.box_q = box_from_json(b.value("q", json()), ex.box_q);
            ex.box_D = box_from_json(b.value("D", json()), ex.box_D);
            ex.box_sigma = box_from_json(b.value("sigma", json()), ex.box_sigma);
        }
        if (doc.contains("scaling")) {
            const auto& s = doc["scaling"];
            auto& p = ex.policy;
            p.delta0 = s.value("delta0", p.delta0);
            p.h0 = s.value("h0", p.h0);
            p.H0 = s.value("H0", p.H0);
            p.tau0 = s.value("tau0", p.tau0);
            p.alpha1_0 = s.value("alpha1_0", p.alpha1_0);
            p.alpha2_0 = s.value("alpha2_0", p.alpha2_0);
            p.k = s.value("k", p.k);
            if (s.contains("gamma")) {
                p.gamma = s["gamma"].is_null() ? std::nullopt : std::optional<double>(s["gamma"].get<double>());
            }
            p.gamma_fallback = s.value("gamma_fallback", p.gamma_fallback);
        }
        if (doc.contains("step_q")) {
            step_from_json(doc["step_q"], c.step_q);
        }
        if (doc.contains("step_sigma")) {
            step_from_json(doc["step_sigma"], c.step_sigma);
        }
        if (doc.contains("coupled")) {
            c.coupled_outer = doc["coupled"].value("outer_iters", c.coupled_outer);
            c.coupled_inner = doc["coupled"].value("inner_iters", c.coupled_inner);
        }
        c.interior_distance = doc.value("interior_distance", c.interior_distance);
        if (doc.contains("deltas")) {
            ex.deltas = doc["deltas"].get<std::vector<double>>();
        }
        c.timings = doc.value("timings", c.timings);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }

    if (ex.fine_n < 2 || (ex.fine_n & (ex.fine_n - 1)) != 0) {
        throw InvalidArgument("config: data.fine_n must be a power of two >= 2");
    }
    if (c.obs_n != 0 && (c.obs_n < 2 || (c.obs_n & (c.obs_n - 1)) != 0 || c.obs_n > ex.fine_n)) {
        throw InvalidArgument("config: data.obs_n must be 0 or a power of two not above fine_n");
    }
    if (c.transfer != "project" && c.transfer != "sample") {
        throw InvalidArgument("config: data.transfer must be \"project\" or \"sample\"");
    }
    if (!(c.positivity_floor > 0.0)) {
        throw InvalidArgument("config: positivity_floor must be positive");
    }
    if (ex.box_D.lower <= 0.0 || ex.box_q.lower <= 0.0) {
        throw InvalidArgument("config: diffusion boxes need a positive lower bound");
    }
    if (ex.box_sigma.lower != 0.0) {
        throw InvalidArgument("config: the potential box must start at 0");
    }
    if (ex.parabolic && !(ex.tau_data > 0.0)) {
        throw InvalidArgument("config: parabolic examples need tau_data > 0");
    }
    if (ex.policy.k != 1 && ex.policy.k != 2) {
        throw InvalidArgument("config: scaling.k must be 1 or 2");
    }
    c.step_q.validate();
    c.step_sigma.validate();
    return c;
}

void apply_override(ordered_json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw InvalidArgument("override must look like key=value: " + assignment);
    }
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    std::vector<std::string> leaves;
    collect_leaves(doc, "", leaves);
    std::string path;
    if (std::find(leaves.begin(), leaves.end(), key) != leaves.end()) {
        path = key;
    } else {
        std::vector<std::string> hits;
        for (const auto& l : leaves) {
            const auto dot = l.rfind('.');
            if ((dot == std::string::npos ? l : l.substr(dot + 1)) == key) {
                hits.push_back(l);
            }
        }
        if (hits.empty()) {
            throw InvalidArgument("unknown config key '" + key + "'");
        }
        if (hits.size() > 1) {
            std::ostringstream os;
            os << "ambiguous config key '" << key << "'; use one of:";
            for (const auto& h : hits) {
                os << ' ' << h;
            }
            throw InvalidArgument(os.str());
        }
        path = hits.front();
    }

    ordered_json value;
    try {
        value = ordered_json::parse(raw);
    } catch (const ordered_json::parse_error&) {
        value = raw;
    }
    ordered_json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

void apply_quick_preset(ordered_json& doc) {
    const auto ex = builtin_example(doc.at("example").get<std::string>());
    doc["preset"] = "quick";
    auto& data = doc["data"];
    data["fine_n"] = ex.dim == 1 ? 512 : 128;
    if (ex.parabolic) {
        const double base = data.value("tau_data", ex.tau_data);
        // coarsen by up to 4 while keeping window ends and lengths on the time grid
        for (int f = 4; f >= 1; --f) {
            const double t = base * f;
            bool aligned = true;
            for (const auto& w : ex.windows) {
                for (const double v : {w.T, w.theta}) {
                    const double r = v / t;
                    aligned = aligned && std::abs(r - std::round(r)) < 1e-9;
                }
            }
            if (aligned) {
                data["tau_data"] = t;
                break;
            }
        }
    }
}

}  // namespace coefrec
