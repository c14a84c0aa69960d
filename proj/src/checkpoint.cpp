#include "fdct/checkpoint.hpp"

#include <fstream>
#include <map>

#include <json.hpp>

#include "fdct/error.hpp"

namespace fdct::model {

namespace fs = std::filesystem;
using nlohmann::json;

void save_checkpoint(const Denoiser& denoiser, const diffusion::ScheduleSettings& schedule,
                     const std::string& provenance_json, const fs::path& dir) {
    fs::create_directories(dir);
    json cfg;
    cfg["denoiser"] = json::parse(denoiser.config().to_json());
    cfg["schedule"] = {{"steps", schedule.steps}, {"beta_start", schedule.beta_start}, {"beta_end", schedule.beta_end}};
    cfg["parameter_count"] = denoiser.parameter_count();
    cfg["training"] = provenance_json.empty() ? json::object() : json::parse(provenance_json);

    // Write to temporaries first so an interrupted save never clobbers a good checkpoint.
    const auto tmp_weights = dir / (std::string(kCheckpointWeights) + ".tmp");
    const auto tmp_config = dir / (std::string(kCheckpointConfig) + ".tmp");
    try {
        torch::serialize::OutputArchive archive;
        denoiser.network()->save(archive);
        archive.save_to(tmp_weights.string());
    } catch (const c10::Error& e) {
        throw CheckpointError("cannot write weights to " + dir.string() + ": " + e.what_without_backtrace());
    }
    {
        std::ofstream out(tmp_config, std::ios::trunc);
        if (!out) throw CheckpointError("cannot write " + tmp_config.string());
        out << cfg.dump(2) << "\n";
    }
    fs::rename(tmp_weights, dir / kCheckpointWeights);
    fs::rename(tmp_config, dir / kCheckpointConfig);
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
    std::ifstream in(dir / kCheckpointConfig);
    if (!in) throw CheckpointError("no " + std::string(kCheckpointConfig) + " in " + dir.string());
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::exception& e) {
        throw CheckpointError("malformed checkpoint config: " + std::string(e.what()));
    }
    DenoiserConfig dcfg;
    diffusion::ScheduleSettings schedule;
    std::int64_t declared = 0;
    try {
        dcfg = DenoiserConfig::from_json(cfg.at("denoiser").dump());
        const auto& s = cfg.at("schedule");
        schedule = {s.at("steps").get<int>(), s.at("beta_start").get<double>(), s.at("beta_end").get<double>()};
        declared = cfg.at("parameter_count").get<std::int64_t>();
    } catch (const json::exception& e) {
        throw CheckpointError("incomplete checkpoint config: " + std::string(e.what()));
    }

    LoadedCheckpoint ck{Denoiser(dcfg, 0), schedule, cfg.value("training", json::object()).dump()};
    if (ck.denoiser.parameter_count() != declared) {
        throw CheckpointError("config declares " + std::to_string(declared) + " parameters, layout has " +
                              std::to_string(ck.denoiser.parameter_count()));
    }
    auto& net = ck.denoiser.network();
    std::map<std::string, std::vector<std::int64_t>> expected;
    for (const auto& item : net->named_parameters()) expected[item.key()] = item.value().sizes().vec();
    try {
        torch::serialize::InputArchive archive;
        archive.load_from((dir / kCheckpointWeights).string());
        net->load(archive);
    } catch (const c10::Error& e) {
        throw CheckpointError("weights in " + dir.string() + " do not match config: " + e.what_without_backtrace());
    }
    for (const auto& item : net->named_parameters()) {
        if (item.value().sizes().vec() != expected[item.key()]) {
            throw CheckpointError("weight '" + item.key() + "' has the wrong shape for this config");
        }
    }
    net->eval();
    return ck;
}

}  // namespace fdct::model
