#include "agg/evaluation.hpp"

#include "agg/error.hpp"
#include "agg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

namespace agg {

double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.size() != truth.size() || pred.empty()) raise(ErrorKind::Config, "rmse: length mismatch or empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(pred.size()));
}

double mae(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.size() != truth.size() || pred.empty()) raise(ErrorKind::Config, "mae: length mismatch or empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

double auc(const std::vector<double>& scores, const std::vector<double>& labels) {
    if (scores.size() != labels.size() || scores.empty()) raise(ErrorKind::Config, "auc: length mismatch or empty input");
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Average ranks over tied scores, then the Mann-Whitney statistic.
    std::vector<double> rank(scores.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double rank_sum_pos = 0.0;
    std::int64_t n_pos = 0, n_neg = 0;
    for (std::size_t k = 0; k < labels.size(); ++k) {
        if (labels[k] > 0.5) {
            rank_sum_pos += rank[k];
            ++n_pos;
        } else {
            ++n_neg;
        }
    }
    if (n_pos == 0 || n_neg == 0) raise(ErrorKind::Data, "auc: both classes must be present");
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<double> mean_baseline(const Sample& sample, double global_mean) {
    const std::size_t d_y = sample.y_true.empty()
                                ? (sample.inputs.empty() ? 1 : sample.inputs.front().y.size())
                                : sample.y_true.size();
    std::vector<double> acc(d_y, 0.0);
    std::int64_t n = 0;
    for (const auto& obs : sample.inputs) {
        if (obs.c_disc != sample.target_channel.c_disc) continue;
        for (std::size_t i = 0; i < d_y; ++i) acc[i] += obs.y[i];
        ++n;
    }
    if (n == 0) { // fall back to the mean over all input nodes
        for (const auto& obs : sample.inputs) {
            for (std::size_t i = 0; i < d_y; ++i) acc[i] += obs.y[i];
            ++n;
        }
    }
    if (n == 0) return std::vector<double>(d_y, global_mean);
    for (auto& x : acc) x /= static_cast<double>(n);
    return acc;
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "dataset,r,metric,value\n";
    char buf[64];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%.17g", row.r);
        os << row.dataset << ',' << buf << ',' << row.metric << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", row.value);
        os << buf << '\n';
    }
    return os.str();
}

std::string EvalReport::to_table() const {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-16s %-8s %-20s %12s", "dataset", "r", "metric", "value");
    os << buf << '\n';
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%-16s %-8.3g %-20s %12.6f", row.dataset.c_str(), row.r, row.metric.c_str(),
                      row.value);
        os << buf << '\n';
    }
    return os.str();
}

namespace {

struct PairedPredictions {
    std::vector<double> model_pred;
    std::vector<double> baseline_pred;
    std::vector<double> truth;
};

PairedPredictions predict_samples(const AggModel& model, const std::vector<Sample>& samples,
                                  const StandardizationStats& stats, bool native_units) {
    PairedPredictions out;
    for (const auto& s : samples) {
        Tensor p = model.forward_impute(s, nullptr, false);
        std::vector<double> pred(p.data(), p.data() + p.numel());
        std::vector<double> base = mean_baseline(s, 0.0);
        std::vector<double> truth = s.y_true;
        if (native_units) {
            pred = stats.destandardize_measurement(s.target_channel.c_disc, pred);
            base = stats.destandardize_measurement(s.target_channel.c_disc, base);
            truth = stats.destandardize_measurement(s.target_channel.c_disc, truth);
        }
        for (std::size_t i = 0; i < truth.size(); ++i) {
            out.model_pred.push_back(pred.at(i));
            out.baseline_pred.push_back(base.at(i));
            out.truth.push_back(truth[i]);
        }
    }
    return out;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

} // namespace

EvalReport evaluate_imputation(const Dataset& raw, const PipelineConfig& pipeline_cfg, const ModelConfig& model_cfg,
                               const TrainConfig& train_cfg, const ImputationStudyConfig& study, std::ostream* log) {
    if (study.r_grid.empty() || study.seeds.empty())
        raise(ErrorKind::Config, "imputation study requires at least one r and one seed");
    EvalReport report;
    for (double r : study.r_grid) {
        std::vector<double> agg_rmse, agg_mae, base_rmse, base_mae;
        for (std::uint64_t seed : study.seeds) {
            PipelineConfig pc = pipeline_cfg;
            pc.removal_rate = r;
            pc.seed = seed;
            TrainConfig tc = train_cfg;
            tc.seed = seed;
            if (log) (*log) << "# r=" << r << " seed=" << seed << '\n';
            TrainResult result = train(raw, pc, model_cfg, tc, log);
            AggModel model = restore_model(result.best);

            // Rebuild this run's validation samples for evaluation.
            auto [inputs, targets] = mask_remove(raw.observations, pc.removal_rate, pc.seed);
            auto [train_targets, val_targets] = split_targets(targets, pc);
            (void)train_targets;
            const StandardizationStats& stats = result.best.stats;
            std::vector<Observation> inputs_std = apply_standardization(inputs, stats);
            std::vector<Observation> val_std = apply_standardization(val_targets, stats);
            PipelineConfig vc = pc;
            vc.stride = vc.context_length;
            std::vector<Sample> val_samples = build_samples(inputs_std, val_std, vc);
            if (val_samples.empty()) raise(ErrorKind::Data, "no validation samples at r=" + std::to_string(r));

            PairedPredictions pp = predict_samples(model, val_samples, stats, study.native_units);
            agg_rmse.push_back(rmse(pp.model_pred, pp.truth));
            agg_mae.push_back(mae(pp.model_pred, pp.truth));
            base_rmse.push_back(rmse(pp.baseline_pred, pp.truth));
            base_mae.push_back(mae(pp.baseline_pred, pp.truth));
        }
        report.rows.push_back({study.dataset_name, r, "agg_rmse", mean_of(agg_rmse)});
        report.rows.push_back({study.dataset_name, r, "agg_mae", mean_of(agg_mae)});
        report.rows.push_back({study.dataset_name, r, "baseline_rmse", mean_of(base_rmse)});
        report.rows.push_back({study.dataset_name, r, "baseline_mae", mean_of(base_mae)});
        if (study.seeds.size() > 1) {
            report.rows.push_back({study.dataset_name, r, "agg_rmse_stddev", stddev_of(agg_rmse)});
            report.rows.push_back({study.dataset_name, r, "agg_mae_stddev", stddev_of(agg_mae)});
        }
    }
    return report;
}

EvalReport evaluate_prediction(const AggModel& model, const StandardizationStats& stats,
                               const std::vector<Observation>& native_inputs, const PredictionProtocol& proto,
                               const TruthFn& truth, std::ostream* log) {
    if (proto.horizons.empty()) raise(ErrorKind::Config, "prediction protocol requires at least one horizon");
    std::vector<Observation> inputs = native_inputs;
    sort_observations(inputs);
    const std::int64_t L = model.config().context_length;
    const auto n = static_cast<std::int64_t>(inputs.size());
    if (n == 0) raise(ErrorKind::Data, "prediction requires input observations");

    EvalReport report;
    for (double h : proto.horizons) {
        std::vector<double> preds, base_preds, truths;
        for (std::int64_t start = 0; start < n; start += L) {
            const std::int64_t end = std::min(start + L, n);
            std::vector<Observation> window(inputs.begin() + start, inputs.begin() + end);
            const double t_hi_native = window.back().t;
            const double t_query_native = t_hi_native + h;

            // One query per distinct channel present in the window.
            std::map<std::vector<std::int64_t>, const Observation*> channels;
            for (const auto& obs : window) channels.emplace(obs.c_disc, &obs);

            for (const auto& [c_disc, rep] : channels) {
                ChannelSpec spec{c_disc, rep->c_cont};
                std::optional<std::vector<double>> y_native;
                if (truth) {
                    y_native = truth(spec, t_query_native);
                } else {
                    double best_dist = proto.truth_tolerance;
                    const Observation* best = nullptr;
                    for (const auto& obs : inputs) {
                        if (obs.c_disc != c_disc) continue;
                        const double d = std::abs(obs.t - t_query_native);
                        if (d <= best_dist) {
                            best_dist = d;
                            best = &obs;
                        }
                    }
                    if (best) y_native = best->y;
                }
                if (!y_native) continue;

                Sample s;
                s.inputs = apply_standardization(window, stats);
                const double t_hi_std = stats.standardize_time(t_hi_native);
                s.tau_g = t_hi_std - stats.standardize_time(t_query_native);
                s.target_channel = spec;
                s.y_true = stats.standardize_measurement(c_disc, *y_native);

                Tensor p = model.forward_impute(s, nullptr, false);
                std::vector<double> base = mean_baseline(s, 0.0);
                for (std::int64_t i = 0; i < p.numel(); ++i) {
                    preds.push_back(p[i]);
                    base_preds.push_back(base.at(static_cast<std::size_t>(i)));
                    truths.push_back(s.y_true.at(static_cast<std::size_t>(i)));
                }
            }
            if (end == n) break;
        }
        if (preds.empty()) {
            if (log) (*log) << "# warning: horizon " << h << " beyond data extent; skipped\n";
            continue;
        }
        report.rows.push_back({proto.dataset_name, h, "rmse", rmse(preds, truths)});
        report.rows.push_back({proto.dataset_name, h, "baseline_rmse", rmse(base_preds, truths)});
    }
    return report;
}

std::vector<SweepPoint> sweep_augmentation(const Dataset& raw, const PipelineConfig& pipeline_cfg,
                                           const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                           const std::vector<std::int64_t>& strides, std::ostream* log) {
    if (strides.empty()) raise(ErrorKind::Config, "sweep requires at least one stride");
    PipelineConfig pc = pipeline_cfg;
    pc.validate();

    auto [inputs, targets] = mask_remove(raw.observations, pc.removal_rate, pc.seed);
    if (targets.empty()) raise(ErrorKind::Data, "removal produced no targets");
    auto [train_targets, val_targets] = split_targets(targets, pc);
    StandardizationStats stats = compute_stats(inputs);
    std::vector<Observation> inputs_std = apply_standardization(inputs, stats);
    std::vector<Observation> train_std = apply_standardization(train_targets, stats);
    std::vector<Observation> val_std = apply_standardization(val_targets, stats);

    PipelineConfig vc = pc;
    vc.stride = vc.context_length;
    std::vector<Sample> val_samples = build_samples(inputs_std, val_std, vc);
    if (val_samples.empty()) raise(ErrorKind::Data, "sweep has no validation samples");

    std::vector<SweepPoint> curve;
    for (std::int64_t stride : strides) {
        PipelineConfig sc = pc;
        sc.stride = stride;
        sc.validate();
        std::vector<Sample> train_samples = build_samples(inputs_std, train_std, sc);
        if (log) (*log) << "# stride=" << stride << " train_samples=" << train_samples.size() << '\n';
        TrainResult result =
            train_on_samples(train_samples, val_samples, model_cfg, train_cfg, raw.schema, stats, log);
        SweepPoint point;
        point.stride = stride;
        point.factor = augmentation_factor(inputs_std, train_std, sc);
        point.val_rmse = result.metrics.best_val;
        curve.push_back(point);
    }
    std::sort(curve.begin(), curve.end(), [](const SweepPoint& a, const SweepPoint& b) { return a.factor < b.factor; });
    return curve;
}

std::string sweep_to_csv(const std::vector<SweepPoint>& curve) {
    std::ostringstream os;
    os << "stride,factor,val_rmse\n";
    char buf[96];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g\n", static_cast<long>(p.stride), p.factor, p.val_rmse);
        os << buf;
    }
    return os.str();
}

double synthetic_truth(const SyntheticConfig& cfg, std::int64_t channel, double t) {
    const double shifted = t - cfg.shift_of(channel);
    double z = 0.0;
    for (std::size_t k = 0; k < cfg.latent_freq.size(); ++k)
        z += cfg.latent_amp[k] * std::sin(2.0 * std::numbers::pi * cfg.latent_freq[k] * shifted + cfg.latent_phase[k]);
    return cfg.gain_of(channel) * z;
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.channels < 2) raise(ErrorKind::Config, "synthetic generator requires at least 2 channels");
    if (cfg.noise_std < 0.0) raise(ErrorKind::Config, "noise_std must be non-negative");
    if (cfg.latent_freq.size() != cfg.latent_amp.size() || cfg.latent_freq.size() != cfg.latent_phase.size())
        raise(ErrorKind::Config, "latent frequency/amplitude/phase lists must have equal length");

    Dataset ds;
    ds.schema.time_name = "t";
    ds.schema.discrete_names = {"channel"};
    ds.schema.vocabularies.resize(1);
    for (std::int64_t c = 0; c < cfg.channels; ++c)
        ds.schema.vocabularies[0].push_back("ch" + std::to_string(c));
    ds.schema.continuous_names = {"shift", "gain"};
    ds.schema.measurement_names = {"y"};

    std::int64_t index = 0;
    for (std::int64_t c = 0; c < cfg.channels; ++c) {
        Rng arrivals = Rng::derive(cfg.seed, 0x617272, static_cast<std::uint64_t>(c));
        Rng noise = Rng::derive(cfg.seed, 0x6e6f69, static_cast<std::uint64_t>(c));
        double t = 0.0;
        while (true) {
            t += -cfg.mean_gap * std::log(1.0 - arrivals.uniform());
            if (t > cfg.horizon) break;
            Observation obs;
            obs.t = t;
            obs.c_disc = {c};
            obs.c_cont = {cfg.shift_of(c), cfg.gain_of(c)};
            double y = synthetic_truth(cfg, c, t);
            if (cfg.noise_std > 0.0) y += cfg.noise_std * noise.normal();
            obs.y = {y};
            obs.source_index = index++;
            ds.observations.push_back(std::move(obs));
        }
    }
    sort_observations(ds.observations);
    for (std::size_t i = 0; i < ds.observations.size(); ++i)
        ds.observations[i].source_index = static_cast<std::int64_t>(i);
    return ds;
}

TruthFn synthetic_truth_fn(const SyntheticConfig& cfg) {
    return [cfg](const ChannelSpec& spec, double t) -> std::optional<std::vector<double>> {
        if (spec.c_disc.empty()) return std::nullopt;
        return std::vector<double>{synthetic_truth(cfg, spec.c_disc[0], t)};
    };
}

} // namespace agg
