#include "fdct/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "fdct/checkpoint.hpp"
#include "fdct/diffusion.hpp"
#include "fdct/error.hpp"
#include "fdct/seed.hpp"
#include "fdct/tensor_util.hpp"

namespace fdct::train {

using nlohmann::json;

void TrainingConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigurationError("learning rate must be >= 0");
    if (batch_size < 1) throw ConfigurationError("batch size must be >= 1");
    if (epochs < 1) throw ConfigurationError("epochs must be >= 1");
    if (max_steps < 0) throw ConfigurationError("max_steps must be >= 0");
    if (checkpoint_every < 0) throw ConfigurationError("checkpoint_every must be >= 0");
    if (checkpoint_every > 0 && checkpoint_dir.empty()) throw ConfigurationError("checkpointing needs a directory");
    diffusion::NoiseSchedule::linear(schedule);
}

std::string TrainingConfig::to_json() const {
    json j{{"learning_rate", learning_rate},
           {"batch_size", batch_size},
           {"epochs", epochs},
           {"max_steps", max_steps},
           {"schedule", {{"steps", schedule.steps}, {"beta_start", schedule.beta_start}, {"beta_end", schedule.beta_end}}},
           {"seed", seed},
           {"checkpoint_every", checkpoint_every},
           {"loss", "mse_noise_prediction"},
           {"optimizer", {{"name", "adam"}, {"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}}}};
    return j.dump();
}

TrainingConfig TrainingConfig::paper_spinners() {
    TrainingConfig c;
    c.learning_rate = 2.5e-5;
    c.batch_size = 12;
    c.epochs = 642;
    return c;
}

TrainingConfig TrainingConfig::paper_synthrad() {
    auto c = paper_spinners();
    c.epochs = 1000;
    return c;
}

TrainingConfig TrainingConfig::toy() {
    TrainingConfig c;
    c.learning_rate = 1e-3;
    c.batch_size = 12;
    c.epochs = 20;
    return c;
}

double loss(const torch::Tensor& eps, const torch::Tensor& eps_hat) {
    return loss_tensor(eps.to(torch::kFloat64), eps_hat.to(torch::kFloat64)).item<double>();
}

torch::Tensor loss_tensor(const torch::Tensor& eps, const torch::Tensor& eps_hat) {
    if (eps.sizes() != eps_hat.sizes()) throw ValidationError("loss: eps and eps_hat differ in shape");
    return (eps - eps_hat).pow(2).mean();
}

torch::Tensor batch_loss(model::Denoiser& denoiser, const torch::Tensor& targets, const torch::Tensor& conditions,
                         const diffusion::NoiseSchedule& sched, torch::Generator& gen) {
    const auto batch = targets.size(0);
    auto t = torch::randint(1, sched.steps() + 1, {batch}, gen, torch::TensorOptions().dtype(torch::kLong));
    auto eps = torch::randn(targets.sizes(), gen, targets.options());
    auto x_t = diffusion::forward_sample(targets, t, eps, sched);
    auto eps_hat = denoiser.forward(x_t, t.to(targets.dtype()), conditions);
    return loss_tensor(eps, eps_hat);
}

std::string record_to_json(const TrainingRecord& r) {
    return json{{"epoch", r.epoch}, {"mean_loss", r.mean_loss}, {"wall_time_s", r.wall_time_s}, {"steps", r.steps}}.dump();
}

std::vector<TrainingRecord> train_in_place(model::Denoiser& denoiser, std::span<const sim::PairedSample> dataset,
                                           const TrainingConfig& tcfg, const EpochCallback& on_epoch) {
    tcfg.validate();
    if (dataset.empty()) throw ValidationError("training set is empty");
    std::vector<Image2D> targets_img, conditions_img;
    for (const auto& s : dataset) {
        if (!s.condition.same_shape(s.target) || !s.target.same_shape(dataset.front().target)) {
            throw ValidationError("training sample '" + s.case_id + "' has a mismatched shape");
        }
        for (const auto* img : {&s.condition, &s.target}) {
            for (double v : img->values) {
                if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("training sample '" + s.case_id + "' leaves [0, 1]");
            }
        }
        targets_img.push_back(s.target);
        conditions_img.push_back(s.condition);
    }
    const auto targets = to_batch(targets_img);
    const auto conditions = to_batch(conditions_img);
    const auto sched = diffusion::NoiseSchedule::linear(tcfg.schedule);

    auto& net = denoiser.network();
    net->train();
    torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(tcfg.learning_rate).betas({0.9, 0.999}).eps(1e-8));
    Rng order_rng(derive_seed(tcfg.seed, 10));
    auto gen = make_generator(derive_seed(tcfg.seed, 11));

    std::ofstream log;
    if (!tcfg.log_path.empty()) {
        if (tcfg.log_path.has_parent_path()) std::filesystem::create_directories(tcfg.log_path.parent_path());
        log.open(tcfg.log_path, std::ios::app);
        if (!log) throw IoError("cannot open training log " + tcfg.log_path.string());
    }

    std::vector<std::int64_t> order(dataset.size());
    std::vector<TrainingRecord> history;
    std::int64_t steps = 0;
    const auto start = std::chrono::steady_clock::now();
    bool done = false;
    for (int epoch = 1; epoch <= tcfg.epochs && !done; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        order_rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        std::int64_t seen = 0;
        for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(tcfg.batch_size)) {
            const auto last = std::min(order.size(), first + static_cast<std::size_t>(tcfg.batch_size));
            auto idx = torch::tensor(std::vector<std::int64_t>(order.begin() + static_cast<std::ptrdiff_t>(first),
                                                               order.begin() + static_cast<std::ptrdiff_t>(last)));
            auto l = batch_loss(denoiser, targets.index_select(0, idx), conditions.index_select(0, idx), sched, gen);
            const double value = l.item<double>();
            if (!std::isfinite(value)) {
                net->eval();
                throw DivergenceError("training loss became non-finite at epoch " + std::to_string(epoch) + ", step " +
                                      std::to_string(steps + 1));
            }
            optimizer.zero_grad();
            l.backward();
            optimizer.step();
            loss_sum += value * static_cast<double>(last - first);
            seen += static_cast<std::int64_t>(last - first);
            ++steps;
            if (tcfg.max_steps > 0 && steps >= tcfg.max_steps) {
                done = true;
                break;
            }
        }
        const TrainingRecord rec{epoch, loss_sum / static_cast<double>(seen),
                                 std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), steps};
        history.push_back(rec);
        if (log) log << record_to_json(rec) << "\n" << std::flush;
        if (on_epoch) on_epoch(rec);
        const bool last_epoch = done || epoch == tcfg.epochs;
        if (tcfg.checkpoint_every > 0 && (epoch % tcfg.checkpoint_every == 0 || last_epoch)) {
            json prov = json::parse(tcfg.to_json());
            prov["epochs_completed"] = epoch;
            prov["steps_completed"] = steps;
            prov["last_mean_loss"] = rec.mean_loss;
            net->eval();
            model::save_checkpoint(denoiser, tcfg.schedule, prov.dump(), tcfg.checkpoint_dir);
            net->train();
        }
    }
    net->eval();
    return history;
}

TrainingResult train(std::span<const sim::PairedSample> dataset, const model::DenoiserConfig& dcfg,
                     const TrainingConfig& tcfg, const EpochCallback& on_epoch) {
    TrainingResult result{model::Denoiser(dcfg, derive_seed(tcfg.seed, 12)), {}};
    result.history = train_in_place(result.denoiser, dataset, tcfg, on_epoch);
    return result;
}

}  // namespace fdct::train
