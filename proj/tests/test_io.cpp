#include <gtest/gtest.h>

#include "support.hpp"
#include "thermonet/io.hpp"

using namespace thermonet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("thermonet_io_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Dataset, RoundTripIsExact) {
    const auto data = test::small_dataset(3);
    const fs::path f = scratch("ds") / "train.jsonl";
    io::write_dataset(f, data, {{"note", "x"}});
    const auto back = io::read_dataset(f);
    ASSERT_EQ(back.size(), data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        EXPECT_EQ(back[i].ambient, data[i].ambient);
        EXPECT_EQ(back[i].dt, data[i].dt);
        EXPECT_EQ(back[i].d, data[i].d);
        for (std::size_t t = 0; t < data[i].size(); ++t) {
            EXPECT_EQ(back[i].F[t], data[i].F[t]);
            EXPECT_EQ(back[i].sigma_undamaged[t], data[i].sigma_undamaged[t]);
        }
    }
    const auto meta = io::read_json(io::metadata_path(f));
    EXPECT_EQ(meta["sequences"], 3);
    EXPECT_EQ(meta["note"], "x");
}

TEST(Dataset, Errors) {
    const fs::path dir = scratch("bad");
    EXPECT_THROW(io::read_dataset(dir / "missing.jsonl"), DataError);
    io::write_text(dir / "broken.jsonl", "{\"ambient\": 3}\n");
    EXPECT_THROW(io::read_dataset(dir / "broken.jsonl"), DataError);
    io::write_text(dir / "empty.jsonl", "");
    EXPECT_THROW(io::read_dataset(dir / "empty.jsonl"), DataError);
}

TEST(Checkpoint, ModelRoundTrip) {
    const auto data = test::small_dataset(2);
    const auto cfg = test::tiny_config(4, 2);
    const auto m = pidl::make_model(cfg, pidl::fit_scalers(data, cfg), 4);
    const fs::path f = scratch("model") / "model.json";
    io::save_model(f, m);
    const auto back = io::load_model(f);
    EXPECT_EQ(back.flatten(), m.flatten());
    EXPECT_EQ(back.config.n_internal, 2u);
    EXPECT_EQ(back.scalers.input.min, m.scalers.input.min);
    EXPECT_EQ(back.scalers.stress.max, m.scalers.stress.max);
    const auto a = pidl::rollout(data[0], m);
    const auto b = pidl::rollout(data[0], back);
    for (std::size_t t = 0; t < a.size(); ++t) EXPECT_EQ(a[t].sigma, b[t].sigma);

    auto j = io::model_to_json(m);
    j["format"] = "other";
    EXPECT_THROW(io::model_from_json(j), DataError);
}

TEST(Checkpoint, TrainingStateRoundTrip) {
    const auto data = test::small_dataset(4, 5);
    const auto cfg = test::tiny_config(4, 2);
    const auto m = pidl::make_model(cfg, pidl::fit_scalers(data, cfg), 4);
    training::TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 2;
    const auto r = training::train(m, data, data, tc);
    const auto back = io::training_state_from_json(io::to_json(r.state));
    EXPECT_EQ(back.params, r.state.params);
    EXPECT_EQ(back.optimizer.m, r.state.optimizer.m);
    EXPECT_EQ(back.optimizer.v, r.state.optimizer.v);
    EXPECT_EQ(back.optimizer.step, r.state.optimizer.step);
    EXPECT_EQ(back.schedule.beta, r.state.schedule.beta);
    EXPECT_EQ(back.next_epoch, 2u);
    EXPECT_EQ(back.history.size(), 2u);
    EXPECT_EQ(back.best_params, r.state.best_params);
}

TEST(Config, ParsesSectionsAndRejectsBadValues) {
    const auto r = io::run_config_from_json(io::json::parse(R"({
        "paths": {"sequence_count": 7, "points_P": 3, "bounds_diag": [0.98, 1.02]},
        "model": {"n_internal": 4, "lstm_width": 8, "znn_hidden": [8], "psi_hidden": [8, 8]},
        "training": {"epochs": 12, "learning_rate": 0.01, "adaptive_beta": false}
    })"));
    EXPECT_EQ(r.data.paths.sequence_count, 7u);
    EXPECT_EQ(r.data.paths.points, 3u);
    EXPECT_EQ(r.data.paths.bounds_diag, (pathgen::Interval{0.98, 1.02}));
    EXPECT_EQ(r.model.n_internal, 4u);
    EXPECT_EQ(r.model.psi_hidden.size(), 2u);
    EXPECT_EQ(r.training.epochs, 12u);
    EXPECT_FALSE(r.training.adaptive_beta);

    EXPECT_THROW(io::run_config_from_json(io::json::parse(R"({"model": {"n_internal": 0}})")), ConfigError);
    EXPECT_THROW(io::run_config_from_json(io::json::parse(R"({"paths": {"rate_min": 1, "rate_max": 0.1}})")),
                 ConfigError);
    EXPECT_THROW(io::run_config_from_json(io::json::parse(R"({"training": {"epochs": "many"}})")), ConfigError);
    EXPECT_THROW(io::run_config_from_json(io::json::parse("[1, 2]")), ConfigError);
}

TEST(Config, SampleFilesLoad) {
    for (const char* name : {"default.json", "quick.json"}) {
        const fs::path p = fs::path(THERMONET_SOURCE_DIR) / "configs" / name;
        EXPECT_NO_THROW(io::load_run_config(p)) << p;
    }
}

TEST(Csv, HistoryAndPredictionShapes) {
    std::vector<training::EpochRecord> h(3);
    const auto text = io::history_csv(h);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);

    const auto data = test::small_dataset(1);
    const auto cfg = test::tiny_config(4, 2);
    const auto m = pidl::make_model(cfg, pidl::fit_scalers(data, cfg), 4);
    const auto p = training::predict(m, data);
    const auto csv = io::prediction_csv(data[0], p, 0);
    EXPECT_EQ(std::size_t(std::count(csv.begin(), csv.end(), '\n')), data[0].size() + 1);
    EXPECT_NE(csv.find("z2"), std::string::npos);
}

TEST(Csv, WritesAreDeterministic) {
    const auto data = test::small_dataset(2);
    const fs::path a = scratch("det_a") / "d.jsonl", b = scratch("det_b") / "d.jsonl";
    io::write_dataset(a, data, {});
    io::write_dataset(b, test::small_dataset(2), {});
    EXPECT_EQ(slurp(a), slurp(b));
}
