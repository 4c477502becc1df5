#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "rcp/errors.hpp"
#include "rcp/io.hpp"
#include "rcp/solver.hpp"

namespace rcp {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

inline double parse_double(const std::string& v, const std::string& key) {
    std::size_t pos = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ParseError("invalid number for '" + key + "': " + v);
    }
    if (pos != v.size()) throw ParseError("invalid number for '" + key + "': " + v);
    return out;
}

inline long parse_int(const std::string& v, const std::string& key) {
    std::size_t pos = 0;
    long out = 0;
    try {
        out = std::stol(v, &pos);
    } catch (const std::exception&) {
        throw ParseError("invalid integer for '" + key + "': " + v);
    }
    if (pos != v.size()) throw ParseError("invalid integer for '" + key + "': " + v);
    return out;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ParseError("invalid boolean for '" + key + "': " + v);
}

}  // namespace detail

/// Flat key=value run configuration mirroring the solver settings and the
/// synthetic-pair parameters. Unknown keys are rejected; '#' starts a
/// comment. Weight bundle paths are loaded by finalize().
struct RunConfig {
    SolverConfig solver;
    io::PairSpec pair;
    std::string feature_weights_path;
    std::string regularizer_weights_path;

    struct KeyDoc {
        const char* key;
        const char* doc;
    };

    static const std::vector<KeyDoc>& known_keys() {
        static const std::vector<KeyDoc> keys = {
            {"iterations", "alternation steps K (default 7)"},
            {"update_mode", "attention | bilateral | hard (default attention)"},
            {"tau", "attention temperature (default 1.0)"},
            {"sigma_f", "bilateral feature bandwidth (default 0.5)"},
            {"sigma_u", "bilateral proximity bandwidth, meters (default 0.5)"},
            {"regularizer", "laplacian | recurrent (default laplacian)"},
            {"lambda", "smoothing strength (default 1.0)"},
            {"smooth_iters", "Jacobi sweeps per smoothing call (default 50)"},
            {"smooth_k", "smoothing graph neighbors (default 8)"},
            {"regularizer_group_k", "set-conv group size in the recurrent unit (default 8)"},
            {"regularizer_weights", "weight bundle manifest for the recurrent unit"},
            {"feature_provider", "handcrafted | setconv (default handcrafted)"},
            {"feature_k", "handcrafted descriptor neighborhood (default 16)"},
            {"feature_weights", "weight bundle manifest for the set-conv backbone"},
            {"sample_ratio", "set-conv per-level subsample ratio (default 0.25)"},
            {"group_k", "set-conv grouping size (default 32)"},
            {"k_omega", "candidate neighborhood size (default 32)"},
            {"posenc_bands", "positional encoding frequency bands (default 4)"},
            {"interp_tau", "feature interpolation temperature (default 0.01)"},
            {"sinkhorn_epsilon", "entropic regularization (default 0.03)"},
            {"sinkhorn_max_iters", "sinkhorn sweep cap (default 100)"},
            {"sinkhorn_tol", "sinkhorn marginal tolerance (default 1e-6)"},
            {"early_stop", "stop when the iterate barely moves (default false)"},
            {"early_stop_tol", "early-stop mean movement, meters (default 1e-5)"},
            {"rot_min_deg", "synthetic rotation magnitude lower bound (default 0)"},
            {"rot_max_deg", "synthetic rotation magnitude upper bound (default 45)"},
            {"trans_min", "synthetic translation component lower bound (default -0.5)"},
            {"trans_max", "synthetic translation component upper bound (default 0.5)"},
            {"partial_fraction", "fraction of points cropped per cloud (default 0.3)"},
            {"noise_sigma", "isotropic target noise, meters (default 0)"},
            {"seed", "generator seed (default 1)"},
        };
        return keys;
    }

    void set(const std::string& key, const std::string& value) {
        using detail::parse_bool;
        using detail::parse_double;
        using detail::parse_int;
        if (key == "iterations")
            solver.iterations = static_cast<int>(parse_int(value, key));
        else if (key == "update_mode") {
            if (value == "attention")
                solver.update.kind = UpdateKind::AttentionSoftmax;
            else if (value == "bilateral")
                solver.update.kind = UpdateKind::BilateralExp;
            else if (value == "hard")
                solver.update.kind = UpdateKind::HardArgmax;
            else
                throw ParseError("update_mode must be attention, bilateral, or hard: " + value);
        } else if (key == "tau")
            solver.update.tau = parse_double(value, key);
        else if (key == "sigma_f")
            solver.update.sigma_f = parse_double(value, key);
        else if (key == "sigma_u")
            solver.update.sigma_u = parse_double(value, key);
        else if (key == "regularizer") {
            if (value == "laplacian")
                solver.regularizer.kind = RegularizerPath::GraphLaplacian;
            else if (value == "recurrent")
                solver.regularizer.kind = RegularizerPath::RecurrentSetConv;
            else
                throw ParseError("regularizer must be laplacian or recurrent: " + value);
        } else if (key == "lambda")
            solver.regularizer.lambda = parse_double(value, key);
        else if (key == "smooth_iters")
            solver.regularizer.sweeps = static_cast<int>(parse_int(value, key));
        else if (key == "smooth_k")
            solver.regularizer.graph_k = static_cast<int>(parse_int(value, key));
        else if (key == "regularizer_group_k")
            solver.regularizer.group_k = static_cast<int>(parse_int(value, key));
        else if (key == "regularizer_weights")
            regularizer_weights_path = value;
        else if (key == "feature_provider") {
            if (value == "handcrafted")
                solver.features.kind = FeatureProviderKind::Handcrafted;
            else if (value == "setconv")
                solver.features.kind = FeatureProviderKind::SetConv;
            else
                throw ParseError("feature_provider must be handcrafted or setconv: " + value);
        } else if (key == "feature_k")
            solver.features.handcrafted_k = static_cast<int>(parse_int(value, key));
        else if (key == "feature_weights")
            feature_weights_path = value;
        else if (key == "sample_ratio")
            solver.features.sample_ratio = parse_double(value, key);
        else if (key == "group_k")
            solver.features.group_k = static_cast<int>(parse_int(value, key));
        else if (key == "k_omega")
            solver.k_omega = static_cast<int>(parse_int(value, key));
        else if (key == "posenc_bands")
            solver.posenc_bands = static_cast<int>(parse_int(value, key));
        else if (key == "interp_tau")
            solver.interp_tau = parse_double(value, key);
        else if (key == "sinkhorn_epsilon")
            solver.sinkhorn.epsilon = parse_double(value, key);
        else if (key == "sinkhorn_max_iters")
            solver.sinkhorn.max_iters = static_cast<int>(parse_int(value, key));
        else if (key == "sinkhorn_tol")
            solver.sinkhorn.tol = parse_double(value, key);
        else if (key == "early_stop")
            solver.early_stop = parse_bool(value, key);
        else if (key == "early_stop_tol")
            solver.early_stop_tol = parse_double(value, key);
        else if (key == "rot_min_deg")
            pair.rot_min_deg = parse_double(value, key);
        else if (key == "rot_max_deg")
            pair.rot_max_deg = parse_double(value, key);
        else if (key == "trans_min")
            pair.trans_min = parse_double(value, key);
        else if (key == "trans_max")
            pair.trans_max = parse_double(value, key);
        else if (key == "partial_fraction")
            pair.partial_fraction = parse_double(value, key);
        else if (key == "noise_sigma")
            pair.noise_sigma = parse_double(value, key);
        else if (key == "seed")
            pair.seed = static_cast<std::uint64_t>(parse_int(value, key));
        else
            throw ParseError("unknown configuration key '" + key + "'");
    }

    void load_file(const std::string& path) {
        auto in = io::detail::open_in(path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string trimmed = detail::trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ParseError("expected key = value in " + path, line_no);
            const std::string key = detail::trim(trimmed.substr(0, eq));
            const std::string value = detail::trim(trimmed.substr(eq + 1));
            if (key.empty() || value.empty())
                throw ParseError("expected key = value in " + path, line_no);
            try {
                set(key, value);
            } catch (const ParseError& e) {
                throw ParseError(std::string(e.what()) + " in " + path, line_no);
            }
        }
    }

    /// Loads the referenced weight bundles and checks cross-field consistency.
    void finalize() {
        if (solver.features.kind == FeatureProviderKind::SetConv) {
            if (feature_weights_path.empty())
                throw InvalidInput("feature_provider=setconv requires feature_weights");
            solver.features.weights = io::read_weight_bundle(feature_weights_path);
        }
        if (solver.regularizer.kind == RegularizerPath::RecurrentSetConv) {
            if (regularizer_weights_path.empty())
                throw InvalidInput("regularizer=recurrent requires regularizer_weights");
            solver.regularizer.weights = io::read_weight_bundle(regularizer_weights_path);
        }
        solver.validate();
        pair.validate();
    }
};

}  // namespace rcp
