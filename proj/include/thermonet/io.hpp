#pragma once

// Configuration files, datasets, checkpoints and CSV exports.
//
// Dataset: one JSON object per line,
//   {"ambient": {...}, "dt": [...], "F": [[9 x row-major]...],
//    "sigma": [[6 x Voigt]...], "sigma_undamaged": [...], "d": [...]}
// with a sidecar <file>.meta.json holding generation statistics and the
// feature and stress extrema.
//
// Checkpoint: JSON with "config", "scalers" and "arrays"; every array has a
// name, a shape and row-major values.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "thermonet/errors.hpp"
#include "thermonet/kinematics.hpp"
#include "thermonet/oracle.hpp"
#include "thermonet/pathgen.hpp"
#include "thermonet/pidl.hpp"
#include "thermonet/training.hpp"

namespace thermonet::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed for " + path.string());
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

template <class T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("field '") + key + "': " + e.what());
    }
}

inline Vec3 vec3_from(const json& j) {
    if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

// ---------------------------------------------------------------------------
// Material and ambient

inline oracle::MaterialParams material_from_json(const json& j) {
    oracle::MaterialParams p;
    read_field(j, "mu_eq", p.mu_eq);
    read_field(j, "mu_neq", p.mu_neq);
    read_field(j, "kappa_v", p.kappa_v);
    read_field(j, "eps0_dot", p.eps0_dot);
    read_field(j, "deltaH", p.deltaH);
    read_field(j, "m", p.m);
    read_field(j, "y0", p.y0);
    read_field(j, "x0", p.x0);
    read_field(j, "b_s", p.b_s);
    read_field(j, "a_s", p.a_s);
    read_field(j, "a", p.a);
    read_field(j, "b", p.b);
    read_field(j, "sigma0", p.sigma0);
    read_field(j, "A_damage", p.A_damage);
    read_field(j, "alpha_w", p.alpha_w);
    read_field(j, "a1", p.a1);
    read_field(j, "a2", p.a2);
    read_field(j, "a3", p.a3);
    read_field(j, "k_b", p.k_b);
    read_field(j, "eps_activation", p.eps_activation);
    read_field(j, "zeta_inplane", p.zeta_inplane);
    read_field(j, "zeta_transverse", p.zeta_transverse);
    if (j.contains("a0")) p.a0 = vec3_from(j["a0"]);
    if (j.contains("g0")) p.g0 = vec3_from(j["g0"]);
    try {
        p.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return p;
}

inline json to_json(const oracle::MaterialParams& p) {
    return {{"mu_eq", p.mu_eq},         {"mu_neq", p.mu_neq},
            {"kappa_v", p.kappa_v},     {"eps0_dot", p.eps0_dot},
            {"deltaH", p.deltaH},       {"m", p.m},
            {"y0", p.y0},               {"x0", p.x0},
            {"b_s", p.b_s},             {"a_s", p.a_s},
            {"a", p.a},                 {"b", p.b},
            {"sigma0", p.sigma0},       {"A_damage", p.A_damage},
            {"alpha_w", p.alpha_w},     {"a1", p.a1},
            {"a2", p.a2},               {"a3", p.a3},
            {"k_b", p.k_b},             {"eps_activation", p.eps_activation},
            {"zeta_inplane", p.zeta_inplane}, {"zeta_transverse", p.zeta_transverse},
            {"a0", to_json(p.a0)},      {"g0", to_json(p.g0)}};
}

inline json to_json(const oracle::AmbientState& a) {
    return {{"w_w", a.w_w}, {"v_np", a.v_np}, {"v_f", {a.v_f[0], a.v_f[1]}}, {"T", a.T}};
}

inline oracle::AmbientState ambient_from_json(const json& j) {
    oracle::AmbientState a;
    read_field(j, "w_w", a.w_w);
    read_field(j, "v_np", a.v_np);
    if (j.contains("v_f")) {
        const auto& v = j["v_f"];
        if (!v.is_array() || v.size() != 2) throw ConfigError("v_f must hold two fractions");
        a.v_f = {v[0].get<double>(), v[1].get<double>()};
    }
    read_field(j, "T", a.T);
    return a;
}

// ---------------------------------------------------------------------------
// Path generation

struct DataConfig {
    pathgen::PathConfig paths;
    std::size_t validation_count = 200;
    std::uint64_t validation_offset = 1000000;
};

inline json to_json(const pathgen::PathConfig& c) {
    json grid = json::array();
    for (const auto& a : c.ambient_grid) grid.push_back(to_json(a));
    return {{"bounds_diag", {c.bounds_diag.lo, c.bounds_diag.hi}},
            {"bounds_offdiag", {c.bounds_offdiag.lo, c.bounds_offdiag.hi}},
            {"points_P", c.points},
            {"steps_per_segment", c.steps_per_segment},
            {"dt", c.dt},
            {"rate_min", c.rate_min},
            {"rate_max", c.rate_max},
            {"sequence_count", c.sequence_count},
            {"halton_seed_offset", c.halton_seed_offset},
            {"max_draws_per_sequence", c.max_draws_per_sequence},
            {"ambient_grid", grid}};
}

inline pathgen::Interval interval_from(const json& j) {
    if (!j.is_array() || j.size() != 2) throw ConfigError("bounds must be [lo, hi]");
    return {j[0].get<double>(), j[1].get<double>()};
}

inline DataConfig data_config_from_json(const json& j) {
    DataConfig d;
    auto& c = d.paths;
    if (j.contains("bounds_diag")) c.bounds_diag = interval_from(j["bounds_diag"]);
    if (j.contains("bounds_offdiag")) c.bounds_offdiag = interval_from(j["bounds_offdiag"]);
    read_field(j, "points_P", c.points);
    read_field(j, "steps_per_segment", c.steps_per_segment);
    read_field(j, "dt", c.dt);
    read_field(j, "rate_min", c.rate_min);
    read_field(j, "rate_max", c.rate_max);
    read_field(j, "sequence_count", c.sequence_count);
    read_field(j, "halton_seed_offset", c.halton_seed_offset);
    read_field(j, "max_draws_per_sequence", c.max_draws_per_sequence);
    read_field(j, "validation_count", d.validation_count);
    read_field(j, "validation_offset", d.validation_offset);
    if (j.contains("ambient_grid")) {
        c.ambient_grid.clear();
        for (const auto& a : j["ambient_grid"]) c.ambient_grid.push_back(ambient_from_json(a));
    }
    try {
        c.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return d;
}

// ---------------------------------------------------------------------------
// Model and training configuration

inline pidl::PIDLConfig model_config_from_json(const json& j) {
    pidl::PIDLConfig c;
    read_field(j, "n_internal", c.n_internal);
    std::string symmetry = "transversely_isotropic";
    read_field(j, "symmetry", symmetry);
    if (symmetry == "isotropic") {
        c.frame = FiberFrame::isotropic();
    } else if (symmetry == "transversely_isotropic") {
        const Vec3 a = j.contains("a0") ? vec3_from(j["a0"]) : Vec3::UnitX();
        const Vec3 g = j.contains("g0") ? vec3_from(j["g0"]) : Vec3::UnitY();
        try {
            c.frame = FiberFrame::two_families(a, g);
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
    } else {
        throw ConfigError("unknown symmetry '" + symmetry + "'");
    }
    std::size_t layers = 2, width = 100;
    read_field(j, "hidden_layers", layers);
    read_field(j, "neurons_per_hidden_layer", width);
    c.lstm_width = width;
    c.lstm_layers = layers;
    c.znn_hidden.assign(layers, width);
    c.psi_hidden.assign(layers, width);
    read_field(j, "lstm_width", c.lstm_width);
    read_field(j, "lstm_layers", c.lstm_layers);
    read_field(j, "znn_hidden", c.znn_hidden);
    read_field(j, "psi_hidden", c.psi_hidden);
    read_field(j, "features", c.features);
    c.validate();
    return c;
}

inline json to_json(const pidl::PIDLConfig& c) {
    json j{{"n_internal", c.n_internal},
           {"symmetry", c.frame.has_fibers() ? "transversely_isotropic" : "isotropic"},
           {"lstm_width", c.lstm_width},
           {"lstm_layers", c.lstm_layers},
           {"znn_hidden", c.znn_hidden},
           {"psi_hidden", c.psi_hidden},
           {"features", c.features}};
    if (c.frame.has_fibers()) {
        j["a0"] = to_json(*c.frame.a0);
        j["g0"] = to_json(*c.frame.g0);
    }
    return j;
}

inline training::TrainConfig train_config_from_json(const json& j) {
    training::TrainConfig t;
    read_field(j, "learning_rate", t.learning_rate);
    read_field(j, "epochs", t.epochs);
    read_field(j, "batch_size", t.batch_size);
    read_field(j, "seed", t.seed);
    read_field(j, "beta_initial", t.beta_initial);
    read_field(j, "adaptive_beta", t.adaptive_beta);
    read_field(j, "beta_update_interval", t.beta_update_interval);
    t.validate();
    return t;
}

inline json to_json(const training::TrainConfig& t) {
    return {{"learning_rate", t.learning_rate}, {"epochs", t.epochs},
            {"batch_size", t.batch_size},       {"seed", t.seed},
            {"beta_initial", t.beta_initial},   {"adaptive_beta", t.adaptive_beta},
            {"beta_update_interval", t.beta_update_interval}};
}

/// All sections of one run file; absent sections keep their defaults.
struct RunConfig {
    oracle::MaterialParams material;
    DataConfig data;
    pidl::PIDLConfig model;
    training::TrainConfig training;
};

inline RunConfig run_config_from_json(const json& j) {
    RunConfig r;
    if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
    if (j.contains("material")) r.material = material_from_json(j["material"]);
    if (j.contains("paths")) r.data = data_config_from_json(j["paths"]);
    if (j.contains("model")) r.model = model_config_from_json(j["model"]);
    if (j.contains("training")) r.training = train_config_from_json(j["training"]);
    return r;
}

inline RunConfig load_run_config(const fs::path& path) { return run_config_from_json(read_json(path)); }

// ---------------------------------------------------------------------------
// Datasets

inline json to_json(const pathgen::LoadedSequence& s) {
    json F = json::array(), sig = json::array(), sig_u = json::array();
    for (std::size_t t = 0; t < s.size(); ++t) {
        json row = json::array();
        for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k) row.push_back(s.F[t](i, k));
        F.push_back(row);
        sig.push_back(to_voigt(s.sigma[t]));
        sig_u.push_back(to_voigt(s.sigma_undamaged[t]));
    }
    return {{"ambient", to_json(s.ambient)}, {"dt", s.dt}, {"F", F}, {"sigma", sig}, {"sigma_undamaged", sig_u},
            {"d", s.d}};
}

inline pathgen::LoadedSequence sequence_from_json(const json& j) {
    pathgen::LoadedSequence s;
    s.ambient = ambient_from_json(j.at("ambient"));
    s.dt = j.at("dt").get<std::vector<double>>();
    for (const auto& row : j.at("F")) {
        const auto v = row.get<std::vector<double>>();
        if (v.size() != 9) throw DataError("F rows need 9 entries");
        Tensor3 F;
        for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k) F(i, k) = v[std::size_t(3 * i + k)];
        s.F.push_back(F);
    }
    auto voigt_list = [](const json& arr) {
        std::vector<Tensor3> out;
        for (const auto& row : arr) {
            const auto v = row.get<std::vector<double>>();
            if (v.size() != 6) throw DataError("stress rows need 6 entries");
            out.push_back(from_voigt(v));
        }
        return out;
    };
    s.sigma = voigt_list(j.at("sigma"));
    s.sigma_undamaged = voigt_list(j.at("sigma_undamaged"));
    s.d = j.at("d").get<std::vector<double>>();
    const std::size_t T = s.F.size();
    if (T == 0 || s.dt.size() != T || s.sigma.size() != T || s.sigma_undamaged.size() != T || s.d.size() != T)
        throw DataError("sequence arrays have inconsistent lengths");
    for (double dt : s.dt)
        if (!(dt > 0.0)) throw DataError("dt must be positive");
    return s;
}

inline fs::path metadata_path(const fs::path& dataset) { return fs::path(dataset.string() + ".meta.json"); }

/// Feature and stress extrema for the two-family invariants and every ambient feature.
inline json scaling_metadata(const std::vector<pathgen::LoadedSequence>& data, const FiberFrame& frame) {
    pidl::PIDLConfig c;
    c.frame = frame;
    const auto s = pidl::fit_scalers(data, c);
    return {{"features", {{"names", s.input.names}, {"min", s.input.min}, {"max", s.input.max}}},
            {"stress", {{"names", s.stress.names}, {"min", s.stress.min}, {"max", s.stress.max}}}};
}

inline void write_dataset(const fs::path& path, const std::vector<pathgen::LoadedSequence>& data, json meta) {
    std::string text;
    for (const auto& s : data) text += to_json(s).dump() + "\n";
    write_text(path, text);
    meta["sequences"] = data.size();
    write_json(metadata_path(path), meta);
}

inline std::vector<pathgen::LoadedSequence> read_dataset(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset " + path.string());
    std::vector<pathgen::LoadedSequence> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            out.push_back(sequence_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
        } catch (const Error& e) {
            throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    if (out.empty()) throw DataError("dataset " + path.string() + " is empty");
    return out;
}

inline json to_json(const pathgen::GenerationStats& s) {
    return {{"kept", s.kept},
            {"rejected_by_rate", s.rejected_by_rate},
            {"failed_integration", s.failed_integration},
            {"rate_min_seen", s.rate_min_seen},
            {"rate_max_seen", s.rate_max_seen},
            {"diagnostics", s.diagnostics}};
}

// ---------------------------------------------------------------------------
// Checkpoints

inline json scaler_to_json(const pidl::FeatureScaler& s) {
    return {{"names", s.names}, {"min", s.min}, {"max", s.max}};
}

inline pidl::FeatureScaler scaler_from_json(const json& j) {
    pidl::FeatureScaler s;
    s.names = j.at("names").get<std::vector<std::string>>();
    s.min = j.at("min").get<std::vector<double>>();
    s.max = j.at("max").get<std::vector<double>>();
    if (!s.fitted()) throw DataError("scaler block is incomplete");
    return s;
}

struct NamedArray {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset;  // into the flat parameter vector
};

/// Names and shapes of every weight, recurrent matrix and bias in flat order.
inline std::vector<NamedArray> parameter_arrays(const pidl::Model& m) {
    std::vector<NamedArray> out;
    std::size_t off = 0;
    const auto& L = m.lstm.layout;
    for (std::size_t l = 0; l < L.layers; ++l) {
        const std::string p = "lstm.layer" + std::to_string(l) + ".";
        const std::size_t H4 = 4 * L.hidden, in = L.layer_input(l);
        out.push_back({p + "W", {H4, in}, off});
        off += H4 * in;
        out.push_back({p + "R", {H4, L.hidden}, off});
        off += H4 * L.hidden;
        out.push_back({p + "b", {H4}, off});
        off += H4;
    }
    for (const auto* net : {&m.znn, &m.psi}) {
        const std::string base = net == &m.znn ? "znn" : "psinn";
        for (std::size_t l = 0; l < net->layout.layers.size(); ++l) {
            const auto& s = net->layout.layers[l];
            const std::string p = base + ".layer" + std::to_string(l) + ".";
            out.push_back({p + "W", {s.out, s.in}, off});
            off += s.weight_count();
            out.push_back({p + "b", {s.out}, off});
            off += s.out;
        }
    }
    return out;
}

inline json model_to_json(const pidl::Model& m) {
    const auto theta = m.flatten();
    json arrays = json::array();
    for (const auto& a : parameter_arrays(m)) {
        std::size_t n = 1;
        for (auto d : a.shape) n *= d;
        arrays.push_back({{"name", a.name},
                          {"shape", a.shape},
                          {"values", std::vector<double>(theta.begin() + std::ptrdiff_t(a.offset),
                                                         theta.begin() + std::ptrdiff_t(a.offset + n))}});
    }
    return {{"format", "thermonet-checkpoint"},
            {"version", 1},
            {"config", to_json(m.config)},
            {"scalers", {{"input", scaler_to_json(m.scalers.input)}, {"stress", scaler_to_json(m.scalers.stress)}}},
            {"activations",
             {{"lstm", "sigmoid/tanh"}, {"znn", "swish, linear output"}, {"psinn", "softplus, linear output >= 0"}}},
            {"arrays", arrays}};
}

inline pidl::Model model_from_json(const json& j) {
    if (j.value("format", "") != "thermonet-checkpoint") throw DataError("not a thermonet checkpoint");
    if (j.value("version", 0) != 1) throw DataError("unsupported checkpoint version");
    pidl::Scalers sc;
    sc.input = scaler_from_json(j.at("scalers").at("input"));
    sc.stress = scaler_from_json(j.at("scalers").at("stress"));
    pidl::Model m = pidl::make_model(model_config_from_json(j.at("config")), sc, 0);
    std::vector<double> theta(m.param_count(), 0.0);
    const auto expected = parameter_arrays(m);
    const auto& arrays = j.at("arrays");
    if (arrays.size() != expected.size()) throw DataError("checkpoint array count does not match the config");
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const auto& a = arrays[i];
        if (a.at("name").get<std::string>() != expected[i].name ||
            a.at("shape").get<std::vector<std::size_t>>() != expected[i].shape)
            throw DataError("checkpoint array '" + a.at("name").get<std::string>() + "' does not match the config");
        const auto v = a.at("values").get<std::vector<double>>();
        std::size_t n = 1;
        for (auto d : expected[i].shape) n *= d;
        if (v.size() != n) throw DataError("checkpoint array '" + expected[i].name + "' has the wrong size");
        std::copy(v.begin(), v.end(), theta.begin() + std::ptrdiff_t(expected[i].offset));
    }
    m.assign(theta);
    return m;
}

inline void save_model(const fs::path& path, const pidl::Model& m) { write_json(path, model_to_json(m)); }

inline pidl::Model load_model(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model " + path.string());
    try {
        return model_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

inline json to_json(const training::TrainingState& s) {
    json hist = json::array();
    for (const auto& r : s.history)
        hist.push_back({r.epoch, r.train_stress, r.train_dissipation, r.beta, r.alpha, r.val_stress});
    return {{"params", s.params},
            {"optimizer",
             {{"m", s.optimizer.m},
              {"v", s.optimizer.v},
              {"step", s.optimizer.step},
              {"learning_rate", s.optimizer.learning_rate},
              {"beta1", s.optimizer.beta1},
              {"beta2", s.optimizer.beta2},
              {"epsilon", s.optimizer.epsilon}}},
            {"schedule",
             {{"beta", s.schedule.beta},
              {"alpha_ema", s.schedule.alpha_ema},
              {"alpha_start", s.schedule.alpha_start},
              {"alpha_end", s.schedule.alpha_end},
              {"decay_horizon", s.schedule.decay_horizon},
              {"updates", s.schedule.updates},
              {"skipped", s.schedule.skipped}}},
            {"next_epoch", s.next_epoch},
            {"best_params", s.best_params},
            {"best_val", s.best_val},
            {"best_epoch", s.best_epoch},
            {"history", hist}};
}

inline training::TrainingState training_state_from_json(const json& j) {
    training::TrainingState s;
    try {
        s.params = j.at("params").get<std::vector<double>>();
        const auto& o = j.at("optimizer");
        s.optimizer.m = o.at("m").get<std::vector<double>>();
        s.optimizer.v = o.at("v").get<std::vector<double>>();
        s.optimizer.step = o.at("step").get<long long>();
        s.optimizer.learning_rate = o.at("learning_rate").get<double>();
        s.optimizer.beta1 = o.at("beta1").get<double>();
        s.optimizer.beta2 = o.at("beta2").get<double>();
        s.optimizer.epsilon = o.at("epsilon").get<double>();
        const auto& b = j.at("schedule");
        s.schedule.beta = b.at("beta").get<double>();
        s.schedule.alpha_ema = b.at("alpha_ema").get<double>();
        s.schedule.alpha_start = b.at("alpha_start").get<double>();
        s.schedule.alpha_end = b.at("alpha_end").get<double>();
        s.schedule.decay_horizon = b.at("decay_horizon").get<double>();
        s.schedule.updates = b.at("updates").get<long long>();
        s.schedule.skipped = b.at("skipped").get<long long>();
        s.next_epoch = j.at("next_epoch").get<std::size_t>();
        s.best_params = j.at("best_params").get<std::vector<double>>();
        s.best_val = j.at("best_val").is_null() ? std::numeric_limits<double>::infinity()
                                                 : j.at("best_val").get<double>();
        s.best_epoch = j.at("best_epoch").get<std::size_t>();
        for (const auto& r : j.at("history"))
            s.history.push_back({r[0].get<std::size_t>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>(),
                                 r[4].get<double>(), r[5].get<double>()});
    } catch (const json::exception& e) {
        throw DataError(std::string("training state: ") + e.what());
    }
    if (s.optimizer.m.size() != s.params.size() || s.optimizer.v.size() != s.params.size())
        throw DataError("training state arrays have inconsistent sizes");
    return s;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string fmt(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

inline std::string history_csv(const std::vector<training::EpochRecord>& h) {
    std::string out = "epoch,train_stress_loss,train_dissipation_loss,beta,alpha,val_stress_loss\n";
    for (const auto& r : h)
        out += std::to_string(r.epoch) + "," + fmt(r.train_stress) + "," + fmt(r.train_dissipation) + "," +
               fmt(r.beta) + "," + fmt(r.alpha) + "," + fmt(r.val_stress) + "\n";
    return out;
}

inline std::string sweep_csv(const std::vector<training::SweepRow>& rows) {
    std::string out = "n_internal,final_loss,val_loss\n";
    for (const auto& r : rows) out += std::to_string(r.n_internal) + "," + fmt(r.final_loss) + "," + fmt(r.val_loss) + "\n";
    return out;
}

inline json to_json(const training::Metrics& m) {
    return {{"stress_mae", m.stress_mae},
            {"rmse", m.rmse},
            {"dissipation_loss", m.dissipation_loss},
            {"dissipation_violation_rate", m.dissipation_violation_rate},
            {"psi_negativity_rate", m.psi_negativity_rate},
            {"steps", m.steps}};
}

/// Per-step table of one predicted sequence: time, Green-Lagrange strain,
/// predicted and damaged stress, oracle stress, psi, D and z.
inline std::string prediction_csv(const pathgen::LoadedSequence& seq, const training::Predictions& p, std::size_t i) {
    static const char* comp[] = {"11", "22", "33", "23", "13", "12"};
    const std::size_t nz = p.z[i].empty() ? 0 : p.z[i][0].size();
    std::string out = "t";
    for (auto c : comp) out += std::string(",E") + c;
    for (auto c : comp) out += std::string(",sigma") + c;
    for (auto c : comp) out += std::string(",sigma_damaged") + c;
    for (auto c : comp) out += std::string(",oracle_sigma") + c;
    out += ",d,psi,D";
    for (std::size_t a = 0; a < nz; ++a) out += ",z" + std::to_string(a + 1);
    out += "\n";
    double time = 0.0;
    for (std::size_t t = 0; t < seq.size(); ++t) {
        if (t > 0) time += seq.dt[t];
        const auto E = to_voigt(green_strain(seq.F[t]));
        const double d = seq.d.empty() ? 0.0 : seq.d[t];
        const auto& s = p.sigma[i][t];
        const auto o = to_voigt(seq.sigma[t]);
        out += fmt(time);
        for (double e : E) out += "," + fmt(e);
        for (double x : s) out += "," + fmt(x);
        for (double x : s) out += "," + fmt((1.0 - d) * x);
        for (double x : o) out += "," + fmt(x);
        out += "," + fmt(d) + "," + fmt(p.psi[i][t]) + "," + fmt(p.D[i][t]);
        for (double z : p.z[i][t]) out += "," + fmt(z);
        out += "\n";
    }
    return out;
}

}  // namespace thermonet::io
