#include "agg/training.hpp"

#include "agg/error.hpp"
#include "agg/evaluation.hpp"
#include "agg/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

namespace agg {

void TrainConfig::validate() const {
    if (epochs < 0) raise(ErrorKind::Config, "epochs must be non-negative");
    if (!(lr_start >= lr_end && lr_end > 0.0))
        raise(ErrorKind::Config, "learning rates must satisfy lr_start >= lr_end > 0");
    if (clip <= 0.0) raise(ErrorKind::Config, "clip must be positive");
    if (batch_size < 1) raise(ErrorKind::Config, "batch_size must be at least 1");
    if (dropout < 0.0 || dropout >= 1.0) raise(ErrorKind::Config, "dropout must lie in [0, 1)");
}

double mse_loss(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size() || pred.empty())
        raise(ErrorKind::Config, "mse_loss: length mismatch or empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

double bce_loss(double prob, double label) {
    constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
    const double p = std::min(std::max(prob, lo), hi);
    return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

double lr_schedule(std::int64_t epoch, const TrainConfig& cfg) {
    if (epoch < 0) raise(ErrorKind::Config, "lr_schedule: negative epoch");
    if (cfg.epochs == 0) return cfg.lr_start;
    const double progress = std::min(static_cast<double>(epoch) / static_cast<double>(cfg.epochs), 1.0);
    return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * progress;
}

namespace {

/// Builds the per-sample loss on the tape: MSE against y_true for
/// regression, BCE of the squashed logit for classification.
Value sample_loss(Tape& tape, const AggModel& model, const Sample& s, Rng* rng, bool training) {
    Value out = model.forward_nodes(tape, s, rng, training);
    if (model.config().task == Task::Classification) {
        Value prob = tape.sigmoid(out);
        return tape.bce(prob, s.y_true.at(0));
    }
    Value target = tape.constant(Tensor::vector(s.y_true));
    Value diff = tape.sub(out, target);
    return tape.mean_all(tape.mul(diff, diff));
}

double validate_model(const AggModel& model, const std::vector<Sample>& val_samples) {
    if (val_samples.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (model.config().task == Task::Classification) {
        std::vector<double> scores, labels;
        for (const auto& s : val_samples) {
            scores.push_back(model.classify(s, nullptr, false));
            labels.push_back(s.y_true.at(0));
        }
        bool has0 = false, has1 = false;
        for (double l : labels) (l > 0.5 ? has1 : has0) = true;
        if (!has0 || !has1) return std::numeric_limits<double>::quiet_NaN();
        return auc(scores, labels);
    }
    std::vector<double> preds, truths;
    for (const auto& s : val_samples) {
        Tensor p = model.forward_impute(s, nullptr, false);
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            preds.push_back(p[i]);
            truths.push_back(s.y_true.at(static_cast<std::size_t>(i)));
        }
    }
    return rmse(preds, truths);
}

bool improved(Task task, double candidate, double best) {
    if (std::isnan(candidate)) return false;
    if (std::isnan(best)) return true;
    return task == Task::Classification ? candidate > best : candidate < best;
}

} // namespace

TrainResult train_on_samples(const std::vector<Sample>& train_samples, const std::vector<Sample>& val_samples,
                             const ModelConfig& model_cfg, const TrainConfig& train_cfg, const ChannelSchema& schema,
                             const StandardizationStats& stats, std::ostream* log) {
    train_cfg.validate();
    ModelConfig mc = model_cfg;
    mc.dropout = train_cfg.dropout;
    mc.task = train_cfg.task;

    AggModel model(mc, schema, train_cfg.seed);
    AdamState adam = AdamState::init(model.params());

    TrainResult result;
    result.metrics.best_val = std::numeric_limits<double>::quiet_NaN();

    if (train_cfg.epochs == 0 || train_samples.empty()) {
        if (train_cfg.epochs > 0 && train_samples.empty())
            raise(ErrorKind::Data, "training requires at least one sample");
        result.best = Checkpoint::capture(model, stats, adam);
        return result;
    }

    std::vector<std::size_t> order(train_samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    GradientBuffer grads(model.params());
    std::int64_t global_step = 0;

    for (std::int64_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        const double lr = lr_schedule(epoch, train_cfg);
        Rng shuffle_rng = Rng::derive(train_cfg.seed, 0x65706f6368, static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        std::int64_t batch_index = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(train_cfg.batch_size)) {
            const std::size_t end = std::min(begin + static_cast<std::size_t>(train_cfg.batch_size), order.size());
            grads.zero();
            double batch_loss = 0.0;
            for (std::size_t k = begin; k < end; ++k) {
                const Sample& s = train_samples[order[k]];
                Rng dropout_rng =
                    Rng::derive(train_cfg.seed, 0x64726f70 ^ static_cast<std::uint64_t>(global_step),
                                static_cast<std::uint64_t>(order[k]));
                Tape tape(&model.params());
                Value loss = sample_loss(tape, model, s, &dropout_rng, true);
                const double l = tape.value(loss)[0];
                if (!std::isfinite(l))
                    raise(ErrorKind::Divergence, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                                     std::to_string(batch_index) + ", lr " + std::to_string(lr));
                batch_loss += l;
                tape.backward(loss, grads);
            }
            const double inv = 1.0 / static_cast<double>(end - begin);
            grads.scale(inv);
            batch_loss *= inv;
            clip_global_norm(grads, train_cfg.clip);
            adam_step(model.params(), grads, adam, lr);
            loss_sum += batch_loss * static_cast<double>(end - begin);
            ++batch_index;
            ++global_step;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        rec.val_metric = validate_model(model, val_samples);
        rec.lr = lr;
        rec.sample_count = static_cast<std::int64_t>(order.size());
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
        result.metrics.epochs.push_back(rec);

        const bool keep = val_samples.empty()
                              ? true // no validation: retain the latest state
                              : improved(mc.task, rec.val_metric, result.metrics.best_val);
        if (keep) {
            if (!val_samples.empty() && !std::isnan(rec.val_metric)) {
                result.metrics.best_val = rec.val_metric;
                result.metrics.best_epoch = epoch;
            } else if (val_samples.empty()) {
                result.metrics.best_epoch = epoch;
            }
            result.best = Checkpoint::capture(model, stats, adam);
        }
        if (log) {
            char line[160];
            std::snprintf(line, sizeof(line), "epoch %ld loss %.6f val %.6f lr %.6f (%.2fs)",
                          static_cast<long>(epoch), rec.train_loss, rec.val_metric, lr, rec.wall_seconds);
            (*log) << line << '\n';
        }
    }
    if (result.best.params.empty()) result.best = Checkpoint::capture(model, stats, adam);
    return result;
}

TrainResult train(const Dataset& raw, const PipelineConfig& pipeline_cfg, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg, std::ostream* log) {
    pipeline_cfg.validate();

    auto [inputs, targets] = mask_remove(raw.observations, pipeline_cfg.removal_rate, pipeline_cfg.seed);
    if (targets.empty()) raise(ErrorKind::Data, "removal produced no targets; nothing to train on");
    auto [train_targets, val_targets] = split_targets(targets, pipeline_cfg);

    StandardizationStats stats = compute_stats(inputs);
    std::vector<Observation> inputs_std = apply_standardization(inputs, stats);
    std::vector<Observation> train_std = apply_standardization(train_targets, stats);
    std::vector<Observation> val_std = apply_standardization(val_targets, stats);

    std::vector<Sample> train_samples = build_samples(inputs_std, train_std, pipeline_cfg);
    PipelineConfig val_cfg = pipeline_cfg;
    val_cfg.stride = val_cfg.context_length; // augmentation-free validation
    std::vector<Sample> val_samples = build_samples(inputs_std, val_std, val_cfg);

    return train_on_samples(train_samples, val_samples, model_cfg, train_cfg, raw.schema, stats, log);
}

std::string format_metrics(const RunMetrics& metrics) {
    std::ostringstream os;
    os << "epoch,train_loss,val,lr\n";
    char buf[128];
    for (const auto& r : metrics.epochs) {
        std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%.17g\n", static_cast<long>(r.epoch), r.train_loss,
                      r.val_metric, r.lr);
        os << buf;
    }
    return os.str();
}

} // namespace agg
