#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "thermonet/io.hpp"
#include "thermonet/pathgen.hpp"
#include "thermonet/pidl.hpp"
#include "thermonet/training.hpp"

namespace fs = std::filesystem;
using namespace thermonet;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4, kGeneration = 5 };

struct Common {
    std::string config;
    bool quick = false;
    unsigned threads = 0;
};

io::RunConfig load_config(const Common& c) {
    io::RunConfig r = c.config.empty() ? io::RunConfig{} : io::load_run_config(c.config);
    if (c.quick) {
        r.data.paths.sequence_count = 50;
        r.data.validation_count = 10;
        r.model.lstm_width = 20;
        r.model.znn_hidden.assign(r.model.znn_hidden.size(), 20);
        r.model.psi_hidden.assign(r.model.psi_hidden.size(), 20);
        r.training.epochs = 500;
    }
    if (const char* s = std::getenv("THERMONET_SEED")) {
        try {
            r.training.seed = std::stoull(s);
        } catch (const std::exception&) {
            throw ConfigError("THERMONET_SEED is not an unsigned integer");
        }
    }
    return r;
}

void print_stats(const std::string& label, const pathgen::GenerationStats& s) {
    std::cout << label << ": kept " << s.kept << ", rejected by rate " << s.rejected_by_rate
              << ", failed integration " << s.failed_integration << ", rate range [" << s.rate_min_seen << ", "
              << s.rate_max_seen << "] 1/s\n";
    for (const auto& d : s.diagnostics) std::cerr << "  " << d << "\n";
}

int gen_data(const Common& c, const std::string& out, bool extrapolation) {
    io::RunConfig r = load_config(c);
    pathgen::PathConfig train_cfg = r.data.paths;
    if (extrapolation) train_cfg.use_extrapolation_bounds();
    const pathgen::GenerationOptions opts{c.threads};
    const auto train = pathgen::generate_dataset(train_cfg, r.material, opts);
    pathgen::PathConfig val_cfg = train_cfg;
    val_cfg.sequence_count = r.data.validation_count;
    val_cfg.halton_seed_offset = train_cfg.halton_seed_offset + r.data.validation_offset;
    pathgen::Dataset val;
    if (val_cfg.sequence_count > 0) val = pathgen::generate_dataset(val_cfg, r.material, opts);

    const FiberFrame frame = FiberFrame::two_families(r.material.a0, r.material.g0);
    auto meta = [&](const pathgen::Dataset& d, const pathgen::PathConfig& pc) {
        io::json m = io::scaling_metadata(d.sequences, frame);
        m["paths"] = io::to_json(pc);
        m["material"] = io::to_json(r.material);
        m["stats"] = io::to_json(d.stats);
        return m;
    };
    const fs::path dir(out);
    io::write_dataset(dir / "train.jsonl", train.sequences, meta(train, train_cfg));
    print_stats("train", train.stats);
    if (!val.sequences.empty()) {
        io::write_dataset(dir / "val.jsonl", val.sequences, meta(val, val_cfg));
        print_stats("validation", val.stats);
    }
    std::cout << "wrote " << dir.string() << "\n";
    return kOk;
}

fs::path dataset_file(const std::string& path, const char* name) {
    const fs::path p(path);
    return fs::is_directory(p) ? p / name : p;
}

int train_cmd(const Common& c, const std::string& data, const std::string& val_path, const std::string& out,
              std::size_t epochs, bool resume) {
    io::RunConfig r = load_config(c);
    if (epochs > 0) r.training.epochs = epochs;
    const auto train_set = io::read_dataset(dataset_file(data, "train.jsonl"));
    const auto val_set = io::read_dataset(val_path.empty() ? dataset_file(data, "val.jsonl") : fs::path(val_path));
    const fs::path dir(out);
    const fs::path state_file = dir / "state.json";

    pidl::Model model;
    std::optional<training::TrainingState> state;
    if (resume && fs::exists(state_file)) {
        model = io::load_model(dir / "init.json");
        state = io::training_state_from_json(io::read_json(state_file));
        std::cout << "resuming at epoch " << state->next_epoch << "\n";
    } else {
        model = pidl::make_model(r.model, pidl::fit_scalers(train_set, r.model), r.training.seed);
        io::save_model(dir / "init.json", model);
    }
    const auto t0 = std::chrono::steady_clock::now();
    training::TrainCallbacks cb;
    cb.on_epoch = [&](const training::TrainingState& s) {
        const auto& h = s.history.back();
        if (h.epoch % 10 == 0 || s.next_epoch == r.training.epochs) {
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::cout << "epoch " << h.epoch << "  stress " << h.train_stress << "  dissipation "
                      << h.train_dissipation << "  beta " << h.beta << "  val " << h.val_stress << "  [" << secs
                      << " s]" << std::endl;
        }
        if (s.next_epoch % 50 == 0) io::write_json(state_file, io::to_json(s));
        return true;
    };
    try {
        const auto res = training::train(model, train_set, val_set, r.training, state, cb);
        io::save_model(dir / "model.json", res.model);
        io::write_json(state_file, io::to_json(res.state));
        io::write_text(dir / "history.csv", io::history_csv(res.state.history));
        std::cout << "best validation stress loss " << res.state.best_val << " at epoch " << res.state.best_epoch
                  << "\nfinal training stress loss " << res.final_train.stress_loss << "\n";
    } catch (const training::TrainingAbort& e) {
        pidl::Model last = model;
        last.assign(e.state().params);
        io::save_model(dir / "last_good.json", last);
        io::write_json(state_file, io::to_json(e.state()));
        io::write_text(dir / "history.csv", io::history_csv(e.state().history));
        throw;
    }
    return kOk;
}

int eval_cmd(const std::string& model_path, const std::string& data, const std::string& out) {
    const auto model = io::load_model(model_path);
    const auto set = io::read_dataset(dataset_file(data, "val.jsonl"));
    const auto m = training::evaluate(model, set);
    const auto j = io::to_json(m);
    std::cout << j.dump(2) << "\n";
    if (!out.empty()) io::write_json(out, j);
    return kOk;
}

std::vector<std::size_t> parse_range(const std::string& s) {
    std::vector<std::size_t> out;
    const auto colon = s.find(':');
    try {
        if (colon == std::string::npos) {
            std::stringstream ss(s);
            std::string item;
            while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
        } else {
            const std::size_t lo = std::stoul(s.substr(0, colon)), hi = std::stoul(s.substr(colon + 1));
            for (std::size_t n = lo; n <= hi; ++n) out.push_back(n);
        }
    } catch (const std::exception&) {
        throw ConfigError("cannot parse internal-variable range '" + s + "'");
    }
    training::check_sweep_counts(out);
    return out;
}

int sweep_cmd(const Common& c, const std::string& data, const std::string& range, const std::string& out,
              std::size_t epochs) {
    io::RunConfig r = load_config(c);
    if (epochs > 0) r.training.epochs = epochs;
    const auto counts = parse_range(range);
    const auto train_set = io::read_dataset(dataset_file(data, "train.jsonl"));
    const auto val_set = io::read_dataset(dataset_file(data, "val.jsonl"));
    const auto rows = training::sweep_internal_variables(counts, train_set, val_set, r.model, r.training,
                                                         [](const training::SweepRow& row) {
                                                             std::cout << "n_z " << row.n_internal << "  loss "
                                                                       << row.final_loss << std::endl;
                                                         });
    io::write_text(out, io::sweep_csv(rows));
    return kOk;
}

int predict_cmd(const std::string& model_path, const std::string& data, const std::string& out) {
    const auto model = io::load_model(model_path);
    const auto set = io::read_dataset(dataset_file(data, "val.jsonl"));
    const auto p = training::predict(model, set);
    std::string text = "sequence,step,sigma11,sigma22,sigma33,sigma23,sigma13,sigma12,psi,D\n";
    for (std::size_t i = 0; i < set.size(); ++i)
        for (std::size_t t = 0; t < set[i].size(); ++t) {
            text += std::to_string(i) + "," + std::to_string(t);
            for (double x : p.sigma[i][t]) text += "," + io::fmt(x);
            text += "," + io::fmt(p.psi[i][t]) + "," + io::fmt(p.D[i][t]) + "\n";
        }
    io::write_text(out, text);
    return kOk;
}

int export_cmd(const std::string& model_path, const std::string& data, const std::string& out, std::size_t limit) {
    const auto model = io::load_model(model_path);
    auto set = io::read_dataset(dataset_file(data, "val.jsonl"));
    if (limit > 0 && set.size() > limit) set.resize(limit);
    const auto p = training::predict(model, set);
    for (std::size_t i = 0; i < set.size(); ++i)
        io::write_text(fs::path(out) / ("curve_" + std::to_string(i) + ".csv"), io::prediction_csv(set[i], p, i));
    std::cout << "wrote " << set.size() << " curves to " << out << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Thermodynamically consistent neural constitutive model"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", common.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
        sub->add_flag("--quick", common.quick, "Small profile: 50 sequences, widths 20, 500 epochs");
        sub->add_option("--threads", common.threads, "Worker cap (0 = all cores)");
    };

    std::string out, data, model, val, range = "2:15";
    bool extrapolation = false, resume = false;
    std::size_t epochs = 0, limit = 0;

    auto* gen = app.add_subcommand("gen-data", "Generate labeled loading paths");
    add_common(gen);
    gen->add_option("-o,--out", out, "Output directory")->required();
    gen->add_flag("--extrapolation", extrapolation, "Use the wider extrapolation bounds");

    auto* tr = app.add_subcommand("train", "Train a model");
    add_common(tr);
    tr->add_option("-d,--data", data, "Dataset directory or training file")->required();
    tr->add_option("--val", val, "Validation file");
    tr->add_option("-o,--out", out, "Output directory")->required();
    tr->add_option("--epochs", epochs, "Override the epoch count");
    tr->add_flag("--resume", resume, "Continue from <out>/state.json");

    auto* ev = app.add_subcommand("eval", "Evaluate a model");
    ev->add_option("-m,--model", model, "Model file")->required()->check(CLI::ExistingFile);
    ev->add_option("-d,--data", data, "Dataset file or directory")->required();
    ev->add_option("-o,--out", out, "Metrics file (JSON)");

    auto* sw = app.add_subcommand("sweep-z", "Train one model per internal-variable count");
    add_common(sw);
    sw->add_option("-d,--data", data, "Dataset directory")->required();
    sw->add_option("--range", range, "lo:hi or a comma list");
    sw->add_option("-o,--out", out, "Output CSV")->required();
    sw->add_option("--epochs", epochs, "Override the epoch count");

    auto* pr = app.add_subcommand("predict", "Per-step predictions for a dataset");
    pr->add_option("-m,--model", model, "Model file")->required()->check(CLI::ExistingFile);
    pr->add_option("-d,--data", data, "Dataset file or directory")->required();
    pr->add_option("-o,--out", out, "Output CSV")->required();

    auto* ex = app.add_subcommand("export-curves", "Stress-strain, psi, D and z tables per sequence");
    ex->add_option("-m,--model", model, "Model file")->required()->check(CLI::ExistingFile);
    ex->add_option("-d,--data", data, "Dataset file or directory")->required();
    ex->add_option("-o,--out", out, "Output directory")->required();
    ex->add_option("--limit", limit, "Export at most this many sequences");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfig;
    }

    try {
        if (*gen) return gen_data(common, out, extrapolation);
        if (*tr) return train_cmd(common, data, val, out, epochs, resume);
        if (*ev) return eval_cmd(model, data, out);
        if (*sw) return sweep_cmd(common, data, range, out, epochs);
        if (*pr) return predict_cmd(model, data, out);
        if (*ex) return export_cmd(model, data, out, limit);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const GenerationFailure& e) {
        std::cerr << "generation failed: " << e.what() << "\n";
        return kGeneration;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    }
    return kFailure;
}
