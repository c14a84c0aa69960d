#include "fdct/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fdct/artifact_sim.hpp"
#include "fdct/checkpoint.hpp"
#include "fdct/dataset.hpp"
#include "fdct/denoiser.hpp"
#include "fdct/diffusion.hpp"
#include "fdct/error.hpp"
#include "fdct/metrics.hpp"
#include "fdct/seed.hpp"
#include "fdct/study.hpp"
#include "fdct/study_http.hpp"
#include "fdct/tensor_util.hpp"
#include "fdct/trainer.hpp"
#include "fdct/volume_io.hpp"

namespace fdct::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Collects what a run needs to be repeated and writes it beside the outputs.
struct RunManifest {
    json j;

    RunManifest(const std::string& command, const std::vector<std::string>& args) {
        j["command"] = command;
        j["argv"] = args;
        j["tool_version"] = kToolVersion;
        j["started_at"] = utc_now();
        j["config"] = json::object();
        j["seeds"] = json::object();
        j["inputs"] = json::object();
        j["outputs"] = json::object();
    }

    void write(const fs::path& dir) {
        j["finished_at"] = utc_now();
        fs::create_directories(dir);
        std::ofstream out(dir / kRunManifest, std::ios::trunc);
        if (!out) throw IoError("cannot write " + (dir / kRunManifest).string());
        out << j.dump(2) << "\n";
    }
};

json read_json_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot read " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigurationError(p.string() + ": " + e.what());
    }
}

void check_device(const std::string& device) {
    if (device != "cpu") throw ConfigurationError("device '" + device + "' is not supported; this build runs on cpu");
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json window_json(const WindowSpec& w) { return {{"level", w.level}, {"width", w.width}}; }

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    std::size_t n = 0;
    int side = 32;
    std::uint64_t seed = 0;
    std::string out;
    std::string config;
    bool clean = false;
    double spacing_mm = 1.0;
};

void apply_distribution(const json& j, sim::RecipeDistribution& d) {
    d.cupping_max_hu = j.value("cupping_max_hu", d.cupping_max_hu);
    d.rings_max = j.value("rings_max", d.rings_max);
    d.ring_amplitude_min_hu = j.value("ring_amplitude_min_hu", d.ring_amplitude_min_hu);
    d.ring_amplitude_max_hu = j.value("ring_amplitude_max_hu", d.ring_amplitude_max_hu);
    d.ring_width_min_px = j.value("ring_width_min_px", d.ring_width_min_px);
    d.ring_width_max_px = j.value("ring_width_max_px", d.ring_width_max_px);
    d.inhomogeneity_max_hu = j.value("inhomogeneity_max_hu", d.inhomogeneity_max_hu);
    d.motion_probability = j.value("motion_probability", d.motion_probability);
    d.motion_shift_max_px = j.value("motion_shift_max_px", d.motion_shift_max_px);
    d.ghost_weight_max = j.value("ghost_weight_max", d.ghost_weight_max);
    d.noise_sigma_min_hu = j.value("noise_sigma_min_hu", d.noise_sigma_min_hu);
    d.noise_sigma_max_hu = j.value("noise_sigma_max_hu", d.noise_sigma_max_hu);
}

json distribution_json(const sim::RecipeDistribution& d) {
    return {{"cupping_max_hu", d.cupping_max_hu},
            {"rings_max", d.rings_max},
            {"ring_amplitude_min_hu", d.ring_amplitude_min_hu},
            {"ring_amplitude_max_hu", d.ring_amplitude_max_hu},
            {"ring_width_min_px", d.ring_width_min_px},
            {"ring_width_max_px", d.ring_width_max_px},
            {"inhomogeneity_max_hu", d.inhomogeneity_max_hu},
            {"motion_probability", d.motion_probability},
            {"motion_shift_max_px", d.motion_shift_max_px},
            {"ghost_weight_max", d.ghost_weight_max},
            {"noise_sigma_min_hu", d.noise_sigma_min_hu},
            {"noise_sigma_max_hu", d.noise_sigma_max_hu}};
}

void cmd_simulate(const SimulateArgs& a, RunManifest& m) {
    if (a.n == 0) throw ValidationError("--n must be at least 1");
    sim::RecipeDistribution dist = a.clean ? sim::RecipeDistribution::none() : sim::RecipeDistribution{};
    WindowSpec window;
    double spacing = a.spacing_mm;
    if (!a.config.empty()) {
        const auto cfg = read_json_file(a.config);
        if (cfg.contains("distribution")) apply_distribution(cfg["distribution"], dist);
        if (cfg.contains("window")) window = {cfg["window"].at("level").get<double>(), cfg["window"].at("width").get<double>()};
        spacing = cfg.value("pixel_spacing_mm", spacing);
    }
    std::vector<sim::SimulatedCase> cases;
    cases.reserve(a.n);
    for (std::size_t i = 0; i < a.n; ++i) cases.push_back(sim::simulate_case(i, a.side, a.seed, dist, window));
    sim::write_dataset(cases, a.out, spacing);
    const auto lesions = std::count_if(cases.begin(), cases.end(), [](const auto& c) { return c.has_lesion; });
    std::cout << "simulated " << a.n << " cases (" << lesions << " with lesion) into " << a.out << "\n";

    m.j["config"] = {{"n", a.n}, {"side", a.side}, {"distribution", distribution_json(dist)},
                     {"window", window_json(window)}, {"pixel_spacing_mm", spacing}};
    m.j["seeds"] = {{"seed", a.seed}};
    m.j["outputs"] = {{"dataset", a.out}};
    m.write(a.out);
}

// ---------------------------------------------------------------- preprocess

struct PreprocessArgs {
    std::string a, b, out;
    int side = 0;
    double level = 50.0, width = 100.0;
};

void cmd_preprocess(const PreprocessArgs& p, RunManifest& m) {
    const WindowSpec w{p.level, p.width};
    w.validate();
    const auto a = load_volume(p.a);
    const auto b = load_volume(p.b);
    auto [sa, sb] = drop_empty_slices_paired(a, b, w);
    if (sa.size() == 0) throw ValidationError("every slice pair of '" + a.case_id() + "' is empty");
    if (p.side > 0) {
        sa = resize_stack(sa, p.side);
        sb = resize_stack(sb, p.side);
    }
    save_stack(sa, a.modality(), fs::path(p.out) / "condition");
    save_stack(sb, b.modality(), fs::path(p.out) / "target");
    std::cout << "kept " << sa.size() << " of " << a.depth() << " slices of '" << a.case_id() << "'\n";

    m.j["config"] = {{"window", window_json(w)}, {"side", p.side}};
    m.j["inputs"] = {{"a", p.a}, {"b", p.b}};
    m.j["outputs"] = {{"condition", (fs::path(p.out) / "condition").string()},
                      {"target", (fs::path(p.out) / "target").string()},
                      {"kept_slices", sa.size()}};
    m.write(p.out);
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string data, out, config, preset = "toy", device = "cpu";
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> steps;
    std::optional<int> epochs, batch_size, checkpoint_every;
    std::optional<double> lr;
    std::size_t holdout = 0;
};

void apply_training(const json& j, train::TrainingConfig& t) {
    t.learning_rate = j.value("learning_rate", t.learning_rate);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.epochs = j.value("epochs", t.epochs);
    t.max_steps = j.value("max_steps", t.max_steps);
    t.seed = j.value("seed", t.seed);
    t.checkpoint_every = j.value("checkpoint_every", t.checkpoint_every);
    if (j.contains("schedule")) {
        const auto& s = j["schedule"];
        t.schedule = {s.value("steps", t.schedule.steps), s.value("beta_start", t.schedule.beta_start),
                      s.value("beta_end", t.schedule.beta_end)};
    }
}

void cmd_train(const TrainArgs& a, RunManifest& m) {
    check_device(a.device);
    std::string preset = a.preset;
    json cfg = a.config.empty() ? json::object() : read_json_file(a.config);
    preset = cfg.value("preset", preset);
    model::DenoiserConfig dcfg;
    train::TrainingConfig tcfg;
    if (preset == "toy") {
        dcfg = model::DenoiserConfig::toy_preset();
        tcfg = train::TrainingConfig::toy();
    } else if (preset == "paper") {
        dcfg = model::DenoiserConfig::paper_preset();
        tcfg = train::TrainingConfig::paper_spinners();
    } else {
        throw ConfigurationError("unknown preset '" + preset + "'");
    }
    tcfg.checkpoint_every = 1;
    if (cfg.contains("denoiser")) dcfg = model::DenoiserConfig::from_json(cfg["denoiser"].dump());
    if (cfg.contains("training")) apply_training(cfg["training"], tcfg);
    if (a.seed) tcfg.seed = *a.seed;
    if (a.steps) tcfg.max_steps = *a.steps;
    if (a.epochs) tcfg.epochs = *a.epochs;
    if (a.batch_size) tcfg.batch_size = *a.batch_size;
    if (a.checkpoint_every) tcfg.checkpoint_every = *a.checkpoint_every;
    if (a.lr) tcfg.learning_rate = *a.lr;
    if (tcfg.max_steps > 0 && !a.epochs && !(cfg.contains("training") && cfg["training"].contains("epochs"))) {
        tcfg.epochs = std::numeric_limits<int>::max();
    }
    tcfg.checkpoint_dir = a.out;
    tcfg.log_path = fs::path(a.out) / "train_log.jsonl";
    dcfg.validate();
    tcfg.validate();

    const auto records = sim::read_manifest(a.data);
    if (a.holdout >= records.size()) throw ValidationError("--holdout leaves no training cases");
    std::vector<sim::PairedSample> samples;
    const std::size_t n_train = records.size() - a.holdout;
    samples.reserve(n_train);
    for (std::size_t i = 0; i < n_train; ++i) {
        samples.push_back(sim::load_pair(a.data, records[i]));
        const auto& s = samples.back().condition;
        if (s.rows != s.cols || static_cast<int>(s.rows) != dcfg.input_side) {
            throw ValidationError("case '" + records[i].case_id + "' is " + std::to_string(s.rows) + "x" +
                                  std::to_string(s.cols) + ", the denoiser expects " +
                                  std::to_string(dcfg.input_side) + "x" + std::to_string(dcfg.input_side));
        }
    }
    fs::create_directories(a.out);
    fs::remove(tcfg.log_path);
    const auto result = train::train(samples, dcfg, tcfg, [&](const train::TrainingRecord& r) {
        std::cerr << "epoch " << r.epoch << " loss " << r.mean_loss << " steps " << r.steps << " (" << r.wall_time_s
                  << " s)\n";
    });
    std::cout << "trained " << result.history.back().steps << " steps over " << result.history.size()
              << " epochs, final loss " << result.history.back().mean_loss << "; checkpoint in " << a.out << "\n";

    m.j["config"] = {{"preset", preset}, {"denoiser", json::parse(dcfg.to_json())},
                     {"training", json::parse(tcfg.to_json())}, {"holdout", a.holdout},
                     {"training_cases", n_train}, {"device", a.device}};
    m.j["seeds"] = {{"seed", tcfg.seed}};
    m.j["inputs"] = {{"dataset", a.data}};
    m.j["outputs"] = {{"checkpoint", a.out}, {"log", tcfg.log_path.string()},
                      {"final_loss", result.history.back().mean_loss}, {"steps", result.history.back().steps}};
    m.write(a.out);
}

// ---------------------------------------------------------------- translate

struct TranslateArgs {
    std::string checkpoint, input, dataset, out, device = "cpu";
    std::uint64_t seed = 0;
    std::size_t holdout = 0;
    std::size_t batch = 64;
};

/// Samples every unit slice with its own seed, batch by batch, in order.
std::vector<Image2D> sample_slices(const std::vector<Image2D>& conditions, const std::vector<std::uint64_t>& seeds,
                                   const model::Denoiser& denoiser, const diffusion::NoiseSchedule& sched,
                                   std::size_t batch) {
    const int side = denoiser.config().input_side;
    std::vector<Image2D> out;
    out.reserve(conditions.size());
    const auto predictor = denoiser.predictor();
    for (std::size_t first = 0; first < conditions.size(); first += batch) {
        const auto last = std::min(conditions.size(), first + batch);
        std::vector<Image2D> chunk;
        for (std::size_t i = first; i < last; ++i) {
            const auto& c = conditions[i];
            if (c.rows != c.cols) throw ValidationError("translation needs square slices");
            chunk.push_back(static_cast<int>(c.rows) == side ? c : resize_slice(c, side));
        }
        const auto x = to_batch(chunk).squeeze(1);
        const std::span<const std::uint64_t> chunk_seeds(seeds.data() + first, last - first);
        const auto y = diffusion::sample_batch(x, predictor, sched, chunk_seeds);
        for (std::size_t i = first; i < last; ++i) {
            auto img = to_image(y[static_cast<std::int64_t>(i - first)]);
            const auto rows = conditions[i].rows;
            if (img.rows != rows) {
                img = resize_slice(img, static_cast<int>(rows));
                for (auto& v : img.values) v = std::clamp(v, 0.0, 1.0);
            }
            out.push_back(std::move(img));
        }
        std::cerr << "sampled " << last << " of " << conditions.size() << " slices\n";
    }
    return out;
}

void cmd_translate(const TranslateArgs& a, RunManifest& m) {
    check_device(a.device);
    if (a.batch == 0) throw ValidationError("--batch-size must be at least 1");
    if (a.input.empty() == a.dataset.empty()) throw ValidationError("give exactly one of --input and --dataset");
    auto ck = model::load_checkpoint(a.checkpoint);
    const auto sched = diffusion::NoiseSchedule::linear(ck.schedule);
    const WindowSpec w;

    m.j["config"] = {{"checkpoint", a.checkpoint}, {"batch_size", a.batch}, {"device", a.device},
                     {"window", window_json(w)}, {"sampling_steps", ck.schedule.steps}};
    m.j["seeds"] = {{"seed", a.seed}, {"per_slice", "derive_seed(seed, item, z)"}};

    if (!a.input.empty()) {
        const auto vol = load_volume(a.input);
        auto stack = unstack(vol, w);
        std::vector<std::uint64_t> seeds;
        for (std::size_t z = 0; z < stack.size(); ++z) seeds.push_back(derive_seed(a.seed, 0, z));
        stack.slices = sample_slices(stack.slices, seeds, ck.denoiser, sched, a.batch);
        auto pred = stack_slices(stack, w);
        save_volume(pred, a.out);
        std::cout << "translated '" << vol.case_id() << "' (" << vol.depth() << " slices) into " << a.out << "\n";
        m.j["inputs"] = {{"volume", a.input}};
        m.j["outputs"] = {{"volume", a.out}};
        m.write(a.out);
        return;
    }

    const auto records = sim::read_manifest(a.dataset);
    if (a.holdout == 0 || a.holdout > records.size()) throw ValidationError("--holdout must be in 1..dataset size");
    const std::size_t first = records.size() - a.holdout;
    std::vector<Image2D> conditions;
    std::vector<std::uint64_t> seeds;
    std::vector<HUVolume> sources;
    for (std::size_t i = first; i < records.size(); ++i) {
        sources.push_back(load_volume(fs::path(a.dataset) / records[i].condition_path));
        conditions.push_back(window_to_unit(sources.back().slice(0), w));
        seeds.push_back(derive_seed(a.seed, i, 0));
    }
    const auto preds = sample_slices(conditions, seeds, ck.denoiser, sched, a.batch);
    for (std::size_t k = 0; k < preds.size(); ++k) {
        const auto& src = sources[k];
        NormalizedSliceStack st{{preds[k]}, w, {0}, src.spacing_mm(), src.case_id()};
        save_volume(stack_slices(st, w), fs::path(a.out) / records[first + k].case_id);
    }
    std::cout << "translated " << preds.size() << " held-out cases into " << a.out << "\n";
    m.j["config"]["holdout"] = a.holdout;
    m.j["inputs"] = {{"dataset", a.dataset}};
    m.j["outputs"] = {{"predictions", a.out}, {"cases", preds.size()}};
    m.write(a.out);
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::vector<std::string> preds;
    std::string target, mask, dataset, out;
    double peak = 100.0, range = 100.0;
    bool raw = false;
    double lesion_min_contrast = 20.0;
};

json medians(const metrics::MetricsReport& r) {
    std::vector<double> mse, psnr, ssim;
    for (const auto& c : r.per_case) {
        mse.push_back(c.mse_hu2);
        psnr.push_back(c.psnr_db);
        ssim.push_back(c.ssim);
    }
    return {{"mse_hu2", median(mse)}, {"psnr_db", median(psnr)}, {"ssim", median(ssim)}};
}

json summary_json(const metrics::Summary& s) { return {{"mean", s.mean}, {"std", s.std}}; }

std::vector<fs::path> list_volumes(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("no prediction directory " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_directory() && fs::exists(e.path() / kMetaFile)) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) throw IoError("no volumes under " + dir.string());
    return out;
}

json lesion_entry(const HUVolume& pred, const HUVolume& target, const HUVolume& mask, const WindowSpec& w) {
    const auto p = metrics::clamp_to(pred, w);
    const auto t = metrics::clamp_to(target, w);
    json e{{"case_id", target.case_id()},
           {"target_contrast_hu", metrics::lesion_contrast(t, mask)},
           {"prediction_contrast_hu", metrics::lesion_contrast(p, mask)}};
    try {
        e["ratio"] = metrics::lesion_preservation(p, t, mask);
    } catch (const UndefinedContrastError&) {
        e["ratio"] = nullptr;
    }
    return e;
}

void cmd_evaluate(const EvaluateArgs& a, RunManifest& m) {
    metrics::MetricsConfig mcfg;
    mcfg.psnr_peak = a.peak;
    mcfg.ssim_range = a.range;
    if (a.raw) mcfg.clamp_window.reset();
    const WindowSpec w;
    json out;
    std::ostringstream table;

    if (a.dataset.empty()) {
        if (a.preds.size() != 1 || a.target.empty()) throw ValidationError("give one --pred and a --target, or --dataset");
        const auto pred = load_volume(a.preds[0]);
        const auto target = load_volume(a.target);
        const std::vector<metrics::VolumePair> pairs{{pred, target}};
        const auto report = metrics::evaluate_cases(pairs, mcfg);
        out["runs"] = json::array({{{"pred", a.preds[0]}, {"report", json::parse(metrics::report_to_json(report))}}});
        if (!a.mask.empty()) out["lesion_preservation"] = lesion_entry(pred, target, load_volume(a.mask), w);
        if (pred.depth() >= 2) out["slice_consistency_hu"] = metrics::slice_consistency(pred);
        table << metrics::report_table(report, "prediction");
    } else {
        const auto records = sim::read_manifest(a.dataset);
        std::map<std::string, const sim::DatasetRecord*> by_id;
        for (const auto& r : records) by_id[r.case_id] = &r;
        std::vector<metrics::MetricsReport> reports;
        json runs = json::array();
        std::vector<std::string> case_ids;
        for (const auto& pdir : a.preds) {
            std::vector<metrics::VolumePair> pairs;
            json lesions = json::array();
            std::vector<std::string> ids;
            for (const auto& vdir : list_volumes(pdir)) {
                auto pred = load_volume(vdir);
                const auto id = vdir.filename().string();
                const auto it = by_id.find(id);
                if (it == by_id.end()) throw ValidationError("prediction '" + id + "' is not in the dataset");
                pred.set_case_id(id);
                auto target = load_volume(fs::path(a.dataset) / it->second->target_path);
                if (it->second->has_lesion) {
                    lesions.push_back(lesion_entry(pred, target, load_volume(fs::path(a.dataset) / it->second->mask_path), w));
                }
                pairs.emplace_back(std::move(pred), std::move(target));
                ids.push_back(id);
            }
            if (case_ids.empty()) case_ids = ids;
            if (ids != case_ids) throw ValidationError("prediction run '" + pdir + "' covers different cases");
            reports.push_back(metrics::evaluate_cases(pairs, mcfg));
            runs.push_back({{"pred", pdir},
                            {"report", json::parse(metrics::report_to_json(reports.back()))},
                            {"median", medians(reports.back())},
                            {"lesion_preservation", lesions}});
            table << metrics::report_table(reports.back(), "prediction " + pdir);
        }
        out["runs"] = runs;
        if (reports.size() > 1) {
            const auto agg = metrics::aggregate_runs(reports);
            out["aggregate_over_runs"] = {{"runs", agg.runs}, {"mse_hu2", summary_json(agg.mse_hu2)},
                                          {"psnr_db", summary_json(agg.psnr_db)}, {"ssim", summary_json(agg.ssim)}};
        }
        std::vector<metrics::VolumePair> base;
        for (const auto& id : case_ids) {
            auto c = load_volume(fs::path(a.dataset) / by_id.at(id)->condition_path);
            auto t = load_volume(fs::path(a.dataset) / by_id.at(id)->target_path);
            base.emplace_back(std::move(c), std::move(t));
        }
        const auto baseline = metrics::evaluate_cases(base, mcfg);
        out["baseline"] = {{"report", json::parse(metrics::report_to_json(baseline))}, {"median", medians(baseline)}};
        out["lesion_min_target_contrast_hu"] = a.lesion_min_contrast;
        table << metrics::report_table(baseline, "condition (input)");
    }
    std::cout << table.str();
    if (!a.out.empty()) {
        fs::create_directories(a.out);
        std::ofstream(fs::path(a.out) / "metrics.json", std::ios::trunc) << out.dump(2) << "\n";
        std::ofstream(fs::path(a.out) / "metrics.txt", std::ios::trunc) << table.str();
        m.j["config"] = {{"psnr_peak", a.peak}, {"ssim_range", a.range}, {"clamp_to_window", !a.raw}};
        m.j["inputs"] = {{"pred", a.preds}, {"target", a.target}, {"dataset", a.dataset}, {"mask", a.mask}};
        m.j["outputs"] = {{"metrics", (fs::path(a.out) / "metrics.json").string()}};
        m.write(a.out);
    }
}

// ---------------------------------------------------------------- study

struct StudyPrepareArgs {
    std::string dataset, preds, out, admin_token;
    std::size_t cases = 10;
    std::vector<std::string> raters{"junior", "senior"};
    std::uint64_t seed = 0;
};

std::string random_token() {
    std::random_device rd;
    std::ostringstream s;
    for (int i = 0; i < 4; ++i) s << std::hex << rd();
    return s.str();
}

void cmd_study_prepare(const StudyPrepareArgs& a, RunManifest& m) {
    const auto records = sim::read_manifest(a.dataset);
    std::map<std::string, const sim::DatasetRecord*> by_id;
    for (const auto& r : records) by_id[r.case_id] = &r;
    const auto preds = list_volumes(a.preds);
    if (preds.size() < a.cases) throw ValidationError("fewer predictions than requested study cases");
    const fs::path root(a.out);
    json cases = json::array();
    for (std::size_t k = 0; k < a.cases; ++k) {
        const auto id = preds[k].filename().string();
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw ValidationError("prediction '" + id + "' is not in the dataset");
        const std::string base = "volumes/" + id + "/";
        save_volume(load_volume(fs::path(a.dataset) / it->second->condition_path), root / (base + "fdct"));
        save_volume(load_volume(fs::path(a.dataset) / it->second->target_path), root / (base + "mdct"));
        save_volume(load_volume(preds[k]), root / (base + "prediction"));
        cases.push_back({{"case_id", id},
                         {"volumes", {{"FDCT", base + "fdct"}, {"MDCT", base + "mdct"}, {"PREDICTION", base + "prediction"}}}});
    }
    const auto token = a.admin_token.empty() ? random_token() : a.admin_token;
    json cfg{{"blinding_seed", a.seed}, {"raters", a.raters}, {"cases", cases},
             {"questionnaire", study::to_json(study::default_questionnaire())}, {"admin_token", token},
             {"log", "ratings.jsonl"}};
    std::ofstream(root / "study.json", std::ios::trunc) << cfg.dump(2) << "\n";
    std::cout << "study with " << a.cases << " cases written to " << a.out << " (admin token " << token << ")\n";
    m.j["config"] = {{"cases", a.cases}, {"raters", a.raters}};
    m.j["seeds"] = {{"blinding_seed", a.seed}};
    m.j["inputs"] = {{"dataset", a.dataset}, {"pred", a.preds}};
    m.j["outputs"] = {{"study_config", (root / "study.json").string()}};
    m.write(root);
}

struct StudyServeArgs {
    std::string data_root, study_config, host = "127.0.0.1";
    int port = 8080;
};

void cmd_study_serve(StudyServeArgs a, RunManifest& m) {
    if (a.data_root.empty()) {
        if (const char* env = std::getenv("STUDY_DATA_ROOT")) a.data_root = env;
    }
    if (a.data_root.empty()) throw ValidationError("no --data-root given and STUDY_DATA_ROOT is unset");
    const fs::path root(a.data_root);
    const fs::path config = a.study_config.empty() ? root / "study.json" : fs::path(a.study_config);
    auto cfg = study::load_study_config(config, root);
    study::StudyService service(std::move(cfg.definition), cfg.log_path);
    study::StudyHttpServer server(service, cfg.admin_token);
    const int port = server.bind(a.host, a.port);
    m.j["config"] = {{"host", a.host}, {"port", port}, {"study_config", config.string()}};
    m.j["inputs"] = {{"data_root", a.data_root}};
    m.j["outputs"] = {{"rating_log", cfg.log_path.string()}};
    m.write(cfg.log_path.parent_path());
    std::cout << "serving study on http://" << a.host << ":" << port << std::endl;
    server.listen();
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Diffusion-based FDCT to MDCT translation toolkit"};
    app.name(args.empty() ? "fdct" : fs::path(args[0]).filename().string());
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    std::function<void(RunManifest&)> action;
    std::string command;

    SimulateArgs sim_a;
    auto* sim_cmd = app.add_subcommand("simulate", "Write a paired artifact/clean phantom dataset");
    sim_cmd->add_option("--n", sim_a.n, "Number of cases")->required();
    sim_cmd->add_option("--side", sim_a.side, "Slice side in pixels")->capture_default_str();
    sim_cmd->add_option("--seed", sim_a.seed, "Base seed")->capture_default_str();
    sim_cmd->add_option("--out", sim_a.out, "Dataset directory")->required();
    sim_cmd->add_option("--config", sim_a.config, "JSON with distribution/window/pixel_spacing_mm overrides");
    sim_cmd->add_option("--spacing", sim_a.spacing_mm, "Pixel spacing in mm")->capture_default_str();
    sim_cmd->add_flag("--clean", sim_a.clean, "Do not inject artifacts");
    sim_cmd->callback([&] { command = "simulate"; action = [&](RunManifest& m) { cmd_simulate(sim_a, m); }; });

    PreprocessArgs pre_a;
    auto* pre_cmd = app.add_subcommand("preprocess", "Window, drop empty slice pairs and resize two volumes");
    pre_cmd->add_option("--a", pre_a.a, "Condition (FDCT) volume directory")->required();
    pre_cmd->add_option("--b", pre_a.b, "Target (MDCT) volume directory")->required();
    pre_cmd->add_option("--out", pre_a.out, "Output directory")->required();
    pre_cmd->add_option("--side", pre_a.side, "Resize slices to side x side (0 keeps the size)")->capture_default_str();
    pre_cmd->add_option("--level", pre_a.level, "Window level in HU")->capture_default_str();
    pre_cmd->add_option("--width", pre_a.width, "Window width in HU")->capture_default_str();
    pre_cmd->callback([&] { command = "preprocess"; action = [&](RunManifest& m) { cmd_preprocess(pre_a, m); }; });

    TrainArgs tr_a;
    auto* tr_cmd = app.add_subcommand("train", "Train a conditional denoiser on a simulated dataset");
    tr_cmd->add_option("--data", tr_a.data, "Dataset directory")->required();
    tr_cmd->add_option("--out", tr_a.out, "Checkpoint directory")->required();
    tr_cmd->add_option("--config", tr_a.config, "JSON with preset, denoiser and training sections");
    tr_cmd->add_option("--preset", tr_a.preset, "toy or paper")->check(CLI::IsMember({"toy", "paper"}))->capture_default_str();
    tr_cmd->add_option("--seed", tr_a.seed, "Training seed");
    tr_cmd->add_option("--steps", tr_a.steps, "Stop after this many optimizer steps");
    tr_cmd->add_option("--epochs", tr_a.epochs, "Number of epochs");
    tr_cmd->add_option("--batch-size", tr_a.batch_size, "Batch size");
    tr_cmd->add_option("--lr", tr_a.lr, "Adam learning rate");
    tr_cmd->add_option("--checkpoint-every", tr_a.checkpoint_every, "Checkpoint every N epochs");
    tr_cmd->add_option("--holdout", tr_a.holdout, "Leave the last N manifest cases out")->capture_default_str();
    tr_cmd->add_option("--device", tr_a.device, "Compute device")->capture_default_str();
    tr_cmd->callback([&] { command = "train"; action = [&](RunManifest& m) { cmd_train(tr_a, m); }; });

    TranslateArgs tl_a;
    auto* tl_cmd = app.add_subcommand("translate", "Sample predictions slice by slice from a checkpoint");
    tl_cmd->add_option("--checkpoint", tl_a.checkpoint, "Checkpoint directory")->required();
    tl_cmd->add_option("--input", tl_a.input, "FDCT volume directory");
    tl_cmd->add_option("--dataset", tl_a.dataset, "Dataset directory (translates the held-out cases)");
    tl_cmd->add_option("--holdout", tl_a.holdout, "Number of trailing dataset cases to translate");
    tl_cmd->add_option("--out", tl_a.out, "Output volume (or directory of volumes)")->required();
    tl_cmd->add_option("--seed", tl_a.seed, "Sampling seed")->capture_default_str();
    tl_cmd->add_option("--batch-size", tl_a.batch, "Slices sampled together")->capture_default_str();
    tl_cmd->add_option("--device", tl_a.device, "Compute device")->capture_default_str();
    tl_cmd->callback([&] { command = "translate"; action = [&](RunManifest& m) { cmd_translate(tl_a, m); }; });

    EvaluateArgs ev_a;
    auto* ev_cmd = app.add_subcommand("evaluate", "Score predictions against targets");
    ev_cmd->add_option("--pred", ev_a.preds, "Prediction volume, or prediction directory with --dataset (repeatable)")
        ->required();
    ev_cmd->add_option("--target", ev_a.target, "Target volume");
    ev_cmd->add_option("--mask", ev_a.mask, "Lesion mask volume (single-pair mode)");
    ev_cmd->add_option("--dataset", ev_a.dataset, "Dataset directory holding targets and conditions");
    ev_cmd->add_option("--out", ev_a.out, "Directory for metrics.json and metrics.txt");
    ev_cmd->add_option("--peak", ev_a.peak, "PSNR peak in HU")->capture_default_str();
    ev_cmd->add_option("--range", ev_a.range, "SSIM dynamic range in HU")->capture_default_str();
    ev_cmd->add_flag("--raw", ev_a.raw, "Score raw HU instead of clamping to the brain window");
    ev_cmd->callback([&] { command = "evaluate"; action = [&](RunManifest& m) { cmd_evaluate(ev_a, m); }; });

    auto* study_cmd = app.add_subcommand("study", "Blinded reader study");
    study_cmd->require_subcommand(1);
    StudyServeArgs sv_a;
    auto* serve_cmd = study_cmd->add_subcommand("serve", "Serve the study HTTP API");
    serve_cmd->add_option("--port", sv_a.port, "TCP port (0 picks a free one)")->capture_default_str();
    serve_cmd->add_option("--host", sv_a.host, "Bind address")->capture_default_str();
    serve_cmd->add_option("--data-root", sv_a.data_root, "Study data root (default $STUDY_DATA_ROOT)");
    serve_cmd->add_option("--study-config", sv_a.study_config, "Study config (default <data-root>/study.json)");
    serve_cmd->callback([&] { command = "study serve"; action = [&](RunManifest& m) { cmd_study_serve(sv_a, m); }; });
    StudyPrepareArgs sp_a;
    auto* prep_cmd = study_cmd->add_subcommand("prepare", "Assemble a study root from a dataset and predictions");
    prep_cmd->add_option("--dataset", sp_a.dataset, "Dataset directory")->required();
    prep_cmd->add_option("--pred", sp_a.preds, "Prediction directory")->required();
    prep_cmd->add_option("--out", sp_a.out, "Study data root")->required();
    prep_cmd->add_option("--cases", sp_a.cases, "Number of cases")->capture_default_str();
    prep_cmd->add_option("--raters", sp_a.raters, "Rater ids")->delimiter(',')->capture_default_str();
    prep_cmd->add_option("--seed", sp_a.seed, "Blinding seed")->capture_default_str();
    prep_cmd->add_option("--admin-token", sp_a.admin_token, "Token for the agreement endpoint (random if empty)");
    prep_cmd->callback([&] { command = "study prepare"; action = [&](RunManifest& m) { cmd_study_prepare(sp_a, m); }; });

    std::vector<std::string> rev(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(rev.begin(), rev.end());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    try {
        RunManifest manifest(command, args);
        action(manifest);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace fdct::cli
