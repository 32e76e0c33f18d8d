#include "cli.hpp"

#include "agg/config_file.hpp"
#include "agg/error.hpp"
#include "agg/evaluation.hpp"
#include "agg/pipeline.hpp"
#include "agg/training.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace agg {

namespace {

namespace fs = std::filesystem;

/// Flag values collected as strings so that file config and command line
/// merge through one resolution path (flags win).
struct RawArgs {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;

    void add(const std::string& key, const std::optional<std::string>& v) {
        if (v) overrides.emplace_back(key, *v);
    }
};

KeyValueConfig merged_config(const RawArgs& raw, const std::string& command) {
    KeyValueConfig kv;
    if (!raw.config_path.empty()) kv = KeyValueConfig::parse_file(raw.config_path);
    for (const auto& [k, v] : raw.overrides) kv.set(k, v);
    const std::string cfg_command = kv.take_string("command", command);
    if (cfg_command != command)
        raise(ErrorKind::Config, "config file was resolved for '" + cfg_command + "', not '" + command + "'");
    return kv;
}

std::string required_path(KeyValueConfig& kv, const std::string& key) {
    const std::string v = kv.take_string(key, "");
    if (v.empty()) raise(ErrorKind::Config, "missing required option --" + key + " (or config key '" + key + "')");
    return v;
}

std::uint64_t resolve_seed(KeyValueConfig& kv) {
    if (kv.has("seed")) return kv.take_uint("seed", 0);
    if (const char* env = std::getenv("AGG_SEED")) return static_cast<std::uint64_t>(std::strtoull(env, nullptr, 10));
    return 0;
}

PipelineConfig resolve_pipeline(KeyValueConfig& kv, std::uint64_t seed) {
    PipelineConfig pc;
    pc.context_length = kv.take_int("context_length", pc.context_length);
    pc.stride = kv.take_int("stride", pc.context_length);
    pc.removal_rate = kv.take_double("removal_rate", pc.removal_rate);
    pc.validation_fraction = kv.take_double("validation_fraction", pc.validation_fraction);
    const std::string mode = kv.take_string("split_mode", "transductive");
    if (mode == "transductive") {
        pc.split_mode = SplitMode::Transductive;
    } else if (mode == "inductive") {
        pc.split_mode = SplitMode::Inductive;
    } else {
        raise(ErrorKind::Config, "split_mode must be transductive or inductive, got '" + mode + "'");
    }
    pc.val_range_start = kv.take_double("val_range_start", 0.0);
    pc.val_range_end = kv.take_double("val_range_end", 0.0);
    pc.seed = seed;
    return pc;
}

ModelConfig resolve_model(KeyValueConfig& kv, std::int64_t context_length) {
    ModelConfig mc;
    mc.feature_width = kv.take_int("feature_width", mc.feature_width);
    mc.heads = kv.take_int("heads", mc.heads);
    mc.encoder_layers = kv.take_int("encoder_layers", mc.encoder_layers);
    mc.context_length = context_length;
    mc.generator_width = kv.take_int("generator_width", mc.generator_width);
    mc.output_dim = kv.take_int("output_dim", mc.output_dim);
    const std::string task = kv.take_string("task", "regression");
    if (task == "regression") {
        mc.task = Task::Regression;
    } else if (task == "classification") {
        mc.task = Task::Classification;
    } else {
        raise(ErrorKind::Config, "task must be regression or classification, got '" + task + "'");
    }
    return mc;
}

TrainConfig resolve_train(KeyValueConfig& kv, std::uint64_t seed, Task task) {
    TrainConfig tc;
    tc.epochs = kv.take_int("epochs", tc.epochs);
    tc.lr_start = kv.take_double("lr_start", tc.lr_start);
    tc.lr_end = kv.take_double("lr_end", tc.lr_end);
    tc.clip = kv.take_double("clip", tc.clip);
    tc.batch_size = kv.take_int("batch_size", tc.batch_size);
    tc.dropout = kv.take_double("dropout", tc.dropout);
    tc.seed = seed;
    tc.task = task;
    return tc;
}

SyntheticConfig resolve_synth(KeyValueConfig& kv, std::uint64_t seed) {
    SyntheticConfig sc;
    sc.channels = kv.take_int("synth_channels", sc.channels);
    sc.latent_freq = kv.take_double_list("synth_freq", sc.latent_freq);
    sc.latent_amp = kv.take_double_list("synth_amp", sc.latent_amp);
    sc.latent_phase = kv.take_double_list("synth_phase", sc.latent_phase);
    sc.channel_shift_step = kv.take_double("synth_shift_step", sc.channel_shift_step);
    sc.channel_gain = kv.take_double_list("synth_gain", sc.channel_gain);
    sc.noise_std = kv.take_double("synth_noise", sc.noise_std);
    sc.mean_gap = kv.take_double("synth_mean_gap", sc.mean_gap);
    sc.horizon = kv.take_double("synth_horizon", sc.horizon);
    sc.seed = seed;
    return sc;
}

std::string join_doubles(const std::vector<double>& v) {
    std::string s;
    char buf[40];
    for (double x : v) {
        std::snprintf(buf, sizeof(buf), "%.17g", x);
        s += (s.empty() ? "" : ",") + std::string(buf);
    }
    return s;
}

std::string join_ints(const std::vector<std::int64_t>& v) {
    std::string s;
    for (auto x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
    return s;
}

void emit_pipeline(KeyValueConfig& kv, const PipelineConfig& pc) {
    kv.set_int("context_length", pc.context_length);
    kv.set_int("stride", pc.stride);
    kv.set_double("removal_rate", pc.removal_rate);
    kv.set_double("validation_fraction", pc.validation_fraction);
    kv.set("split_mode", pc.split_mode == SplitMode::Inductive ? "inductive" : "transductive");
    kv.set_double("val_range_start", pc.val_range_start);
    kv.set_double("val_range_end", pc.val_range_end);
}

void emit_model(KeyValueConfig& kv, const ModelConfig& mc) {
    kv.set_int("feature_width", mc.feature_width);
    kv.set_int("heads", mc.heads);
    kv.set_int("encoder_layers", mc.encoder_layers);
    kv.set_int("generator_width", mc.generator_width);
    kv.set_int("output_dim", mc.output_dim);
    kv.set("task", mc.task == Task::Classification ? "classification" : "regression");
}

void emit_train(KeyValueConfig& kv, const TrainConfig& tc) {
    kv.set_int("epochs", tc.epochs);
    kv.set_double("lr_start", tc.lr_start);
    kv.set_double("lr_end", tc.lr_end);
    kv.set_double("clip", tc.clip);
    kv.set_int("batch_size", tc.batch_size);
    kv.set_double("dropout", tc.dropout);
}

void emit_synth(KeyValueConfig& kv, const SyntheticConfig& sc) {
    kv.set_int("synth_channels", sc.channels);
    kv.set("synth_freq", join_doubles(sc.latent_freq));
    kv.set("synth_amp", join_doubles(sc.latent_amp));
    kv.set("synth_phase", join_doubles(sc.latent_phase));
    kv.set_double("synth_shift_step", sc.channel_shift_step);
    if (!sc.channel_gain.empty()) kv.set("synth_gain", join_doubles(sc.channel_gain));
    kv.set_double("synth_noise", sc.noise_std);
    kv.set_double("synth_mean_gap", sc.mean_gap);
    kv.set_double("synth_horizon", sc.horizon);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) raise(ErrorKind::Io, "cannot write " + path);
    out << text;
}

void write_resolved(const std::string& near_output, const KeyValueConfig& kv, bool output_is_dir) {
    fs::path p(near_output);
    fs::path target = output_is_dir ? p / "resolved.cfg" : fs::path(near_output + ".resolved.cfg");
    write_text(target.string(), kv.serialize());
}

std::string schema_sidecar_for(const std::string& data_path, const std::string& explicit_schema) {
    if (!explicit_schema.empty()) return explicit_schema;
    fs::path p(data_path);
    p.replace_extension(".schema");
    return p.string();
}

Dataset load_dataset(const std::string& data_path, const std::string& schema_path, bool grow_vocab) {
    return load_csv(data_path, load_schema(schema_sidecar_for(data_path, schema_path)), grow_vocab);
}

// ---- subcommands ----

int cmd_synth(const RawArgs& raw) {
    KeyValueConfig kv = merged_config(raw, "synth");
    const std::string out = required_path(kv, "out");
    const std::uint64_t seed = resolve_seed(kv);
    SyntheticConfig sc = resolve_synth(kv, seed);
    kv.reject_unknown();

    Dataset ds = generate_synthetic(sc);
    write_csv(out, ds);
    fs::path schema_path(out);
    schema_path.replace_extension(".schema");
    write_schema(schema_path.string(), ds.schema);

    KeyValueConfig resolved;
    resolved.set("command", "synth");
    resolved.set("out", out);
    resolved.set_int("seed", static_cast<std::int64_t>(seed));
    emit_synth(resolved, sc);
    write_resolved(out, resolved, false);
    std::cout << "wrote " << ds.observations.size() << " observations to " << out << "\n";
    return 0;
}

int cmd_train(const RawArgs& raw) {
    KeyValueConfig kv = merged_config(raw, "train");
    const std::string data = required_path(kv, "data");
    const std::string schema = kv.take_string("schema", "");
    const std::string out = required_path(kv, "out");
    const std::uint64_t seed = resolve_seed(kv);
    PipelineConfig pc = resolve_pipeline(kv, seed);
    ModelConfig mc = resolve_model(kv, pc.context_length);
    TrainConfig tc = resolve_train(kv, seed, mc.task);
    kv.reject_unknown();

    Dataset ds = load_dataset(data, schema, true);
    fs::create_directories(out);

    KeyValueConfig resolved;
    resolved.set("command", "train");
    resolved.set("data", data);
    resolved.set("schema", schema_sidecar_for(data, schema));
    resolved.set("out", out);
    resolved.set_int("seed", static_cast<std::int64_t>(seed));
    emit_pipeline(resolved, pc);
    emit_model(resolved, mc);
    emit_train(resolved, tc);
    write_resolved(out, resolved, true);

    TrainResult result = train(ds, pc, mc, tc, &std::cout);
    result.best.meta = resolved.serialize();
    save_checkpoint((fs::path(out) / "best.ckpt").string(), result.best);
    write_text((fs::path(out) / "metrics.csv").string(), format_metrics(result.metrics));
    std::cout << "best epoch " << result.metrics.best_epoch << " val " << result.metrics.best_val << "\n";
    return 0;
}

int cmd_impute(const RawArgs& raw) {
    KeyValueConfig kv = merged_config(raw, "impute");
    const std::string checkpoint = required_path(kv, "checkpoint");
    const std::string data = required_path(kv, "data");
    const std::string schema = kv.take_string("schema", "");
    const std::string targets = required_path(kv, "targets");
    const std::string out = required_path(kv, "out");
    kv.reject_unknown();

    Checkpoint ckpt = load_checkpoint(checkpoint);
    AggModel model = restore_model(ckpt);
    // The checkpoint's schema carries the training vocabulary; new
    // categories in the context data are a data error here.
    Dataset ds = load_csv(data, ckpt.schema, false);
    std::vector<Observation> queries = load_query_csv(targets, ckpt.schema);
    std::vector<Observation> inputs_std = apply_standardization(ds.observations, ckpt.stats);

    std::ofstream pred(out);
    if (!pred) raise(ErrorKind::Io, "cannot write " + out);
    pred << ckpt.schema.time_name;
    for (const auto& n : ckpt.schema.discrete_names) pred << ',' << n;
    for (const auto& n : ckpt.schema.continuous_names) pred << ',' << n;
    for (const auto& n : ckpt.schema.measurement_names) pred << ',' << n << "_pred";
    pred << '\n';

    char buf[40];
    for (const auto& query : queries) {
        Observation q = query;
        q.t = ckpt.stats.standardize_time(q.t);
        Sample s = build_query_sample(inputs_std, q, model.config().context_length);
        Tensor y = model.forward_impute(s, nullptr, false);
        std::vector<double> y_native =
            ckpt.stats.destandardize_measurement(query.c_disc, std::vector<double>(y.data(), y.data() + y.numel()));

        std::snprintf(buf, sizeof(buf), "%.17g", query.t);
        pred << buf;
        for (std::size_t f = 0; f < ckpt.schema.discrete_names.size(); ++f)
            pred << ',' << ckpt.schema.vocabularies[f][static_cast<std::size_t>(query.c_disc[f])];
        for (double c : query.c_cont) {
            std::snprintf(buf, sizeof(buf), "%.17g", c);
            pred << ',' << buf;
        }
        for (double v : y_native) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            pred << ',' << buf;
        }
        pred << '\n';
    }

    KeyValueConfig resolved;
    resolved.set("command", "impute");
    resolved.set("checkpoint", checkpoint);
    resolved.set("data", data);
    if (!schema.empty()) resolved.set("schema", schema);
    resolved.set("targets", targets);
    resolved.set("out", out);
    write_resolved(out, resolved, false);
    std::cout << "wrote " << queries.size() << " predictions to " << out << "\n";
    return 0;
}

int cmd_predict(const RawArgs& raw) {
    KeyValueConfig kv = merged_config(raw, "predict");
    const std::string checkpoint = required_path(kv, "checkpoint");
    const std::string data = required_path(kv, "data");
    const std::string out = required_path(kv, "out");
    PredictionProtocol proto;
    proto.horizons = kv.take_double_list("horizons", proto.horizons);
    proto.truth_tolerance = kv.take_double("truth_tolerance", proto.truth_tolerance);
    proto.dataset_name = kv.take_string("dataset_name", proto.dataset_name);
    kv.reject_unknown();

    Checkpoint ckpt = load_checkpoint(checkpoint);
    AggModel model = restore_model(ckpt);
    Dataset ds = load_csv(data, ckpt.schema, false);

    EvalReport report = evaluate_prediction(model, ckpt.stats, ds.observations, proto, nullptr, &std::cout);
    write_text(out, report.to_csv());
    std::cout << report.to_table();

    KeyValueConfig resolved;
    resolved.set("command", "predict");
    resolved.set("checkpoint", checkpoint);
    resolved.set("data", data);
    resolved.set("out", out);
    resolved.set("horizons", join_doubles(proto.horizons));
    resolved.set_double("truth_tolerance", proto.truth_tolerance);
    resolved.set("dataset_name", proto.dataset_name);
    write_resolved(out, resolved, false);
    return 0;
}

int cmd_evaluate(const RawArgs& raw) {
    KeyValueConfig kv = merged_config(raw, "evaluate");
    const std::string data = required_path(kv, "data");
    const std::string schema = kv.take_string("schema", "");
    const std::string out = required_path(kv, "out");
    const std::uint64_t seed = resolve_seed(kv);
    PipelineConfig pc = resolve_pipeline(kv, seed);
    ModelConfig mc = resolve_model(kv, pc.context_length);
    TrainConfig tc = resolve_train(kv, seed, mc.task);
    ImputationStudyConfig study;
    study.dataset_name = kv.take_string("dataset_name", study.dataset_name);
    study.r_grid = kv.take_double_list("r_grid", study.r_grid);
    std::vector<std::int64_t> seeds = kv.take_int_list("seeds", {0});
    study.seeds.clear();
    for (auto s : seeds) study.seeds.push_back(static_cast<std::uint64_t>(s));
    study.native_units = kv.take_int("native_units", 0) != 0;
    kv.reject_unknown();

    Dataset ds = load_dataset(data, schema, true);
    EvalReport report = evaluate_imputation(ds, pc, mc, tc, study, &std::cout);
    write_text(out, report.to_csv());
    std::cout << report.to_table();

    KeyValueConfig resolved;
    resolved.set("command", "evaluate");
    resolved.set("data", data);
    resolved.set("schema", schema_sidecar_for(data, schema));
    resolved.set("out", out);
    resolved.set_int("seed", static_cast<std::int64_t>(seed));
    emit_pipeline(resolved, pc);
    emit_model(resolved, mc);
    emit_train(resolved, tc);
    resolved.set("dataset_name", study.dataset_name);
    resolved.set("r_grid", join_doubles(study.r_grid));
    resolved.set("seeds", join_ints(seeds));
    resolved.set_int("native_units", study.native_units ? 1 : 0);
    write_resolved(out, resolved, false);
    return 0;
}

int cmd_sweep(const RawArgs& raw) {
    KeyValueConfig kv = merged_config(raw, "sweep");
    const std::string data = required_path(kv, "data");
    const std::string schema = kv.take_string("schema", "");
    const std::string out = required_path(kv, "out");
    const std::uint64_t seed = resolve_seed(kv);
    PipelineConfig pc = resolve_pipeline(kv, seed);
    ModelConfig mc = resolve_model(kv, pc.context_length);
    TrainConfig tc = resolve_train(kv, seed, mc.task);
    std::vector<std::int64_t> strides =
        kv.take_int_list("strides", {pc.context_length, pc.context_length / 2, pc.context_length / 5,
                                     std::max<std::int64_t>(1, pc.context_length / 10)});
    kv.reject_unknown();

    Dataset ds = load_dataset(data, schema, true);
    auto curve = sweep_augmentation(ds, pc, mc, tc, strides, &std::cout);
    write_text(out, sweep_to_csv(curve));
    for (const auto& p : curve)
        std::cout << "stride " << p.stride << " factor " << p.factor << " val_rmse " << p.val_rmse << "\n";

    KeyValueConfig resolved;
    resolved.set("command", "sweep");
    resolved.set("data", data);
    resolved.set("schema", schema_sidecar_for(data, schema));
    resolved.set("out", out);
    resolved.set_int("seed", static_cast<std::int64_t>(seed));
    emit_pipeline(resolved, pc);
    emit_model(resolved, mc);
    emit_train(resolved, tc);
    resolved.set("strides", join_ints(strides));
    write_resolved(out, resolved, false);
    return 0;
}

} // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Asynchronous graph generation for multi-channel time series"};
    app.require_subcommand(1);

    // Everything funnels into key=value overrides so that a config file and
    // the command line resolve identically (flags win over file keys).
    RawArgs raw;
    std::optional<std::string> data, schema, out, checkpoint, targets;
    std::optional<std::string> seed, context_length, stride, removal_rate, validation_fraction, split_mode;
    std::optional<std::string> feature_width, heads, encoder_layers, generator_width, task;
    std::optional<std::string> epochs, lr_start, lr_end, clip, batch_size, dropout;
    std::optional<std::string> channels, noise, horizon_len, mean_gap, shift_step;
    std::optional<std::string> r_grid, seeds, strides, horizons, dataset_name, native_units;

    auto add_common = [&](CLI::App* sub, bool needs_data) {
        sub->add_option("--config", raw.config_path, "key=value config file; flags override it");
        sub->add_option("--seed", seed, "run seed (falls back to AGG_SEED, then 0)");
        sub->add_option("--out", out, "output path");
        if (needs_data) {
            sub->add_option("--data", data, "observation CSV");
            sub->add_option("--schema", schema, "schema sidecar (default: data path with .schema)");
        }
    };
    auto add_training_opts = [&](CLI::App* sub) {
        sub->add_option("--context-length", context_length, "nodes per input block (L)");
        sub->add_option("--stride", stride, "window stride in node indices");
        sub->add_option("--removal-rate", removal_rate, "fraction of observations removed as targets");
        sub->add_option("--validation-fraction", validation_fraction, "fraction of targets held out");
        sub->add_option("--split-mode", split_mode, "transductive | inductive");
        sub->add_option("--feature-width", feature_width, "embedding width per feature");
        sub->add_option("--heads", heads, "attention heads");
        sub->add_option("--encoder-layers", encoder_layers, "encoder blocks");
        sub->add_option("--generator-width", generator_width, "generator latent width (0 = d_encoder)");
        sub->add_option("--task", task, "regression | classification");
        sub->add_option("--epochs", epochs, "training epochs");
        sub->add_option("--lr-start", lr_start, "initial learning rate");
        sub->add_option("--lr-end", lr_end, "final learning rate");
        sub->add_option("--clip", clip, "global gradient-norm clip");
        sub->add_option("--batch-size", batch_size, "samples per optimizer step");
        sub->add_option("--dropout", dropout, "dropout rate");
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic asynchronous dataset");
    add_common(synth, false);
    synth->add_option("--channels", channels, "number of channels");
    synth->add_option("--noise", noise, "observation noise stddev");
    synth->add_option("--horizon", horizon_len, "time horizon");
    synth->add_option("--mean-gap", mean_gap, "mean arrival gap per channel");
    synth->add_option("--shift-step", shift_step, "per-channel time shift step");

    auto* train_cmd = app.add_subcommand("train", "run the self-supervised imputation training");
    add_common(train_cmd, true);
    add_training_opts(train_cmd);

    auto* impute = app.add_subcommand("impute", "impute measurements for a target spec");
    add_common(impute, true);
    impute->add_option("--checkpoint", checkpoint, "trained checkpoint");
    impute->add_option("--targets", targets, "query CSV (t,<channel features...>)");

    auto* predict = app.add_subcommand("predict", "evaluate horizon-ahead prediction");
    add_common(predict, true);
    predict->add_option("--checkpoint", checkpoint, "trained checkpoint");
    predict->add_option("--horizons", horizons, "comma-separated horizons (native time units)");
    predict->add_option("--dataset-name", dataset_name, "label for report rows");

    auto* evaluate = app.add_subcommand("evaluate", "imputation study over a removal-rate grid");
    add_common(evaluate, true);
    add_training_opts(evaluate);
    evaluate->add_option("--r-grid", r_grid, "comma-separated removal rates");
    evaluate->add_option("--seeds", seeds, "comma-separated seeds");
    evaluate->add_option("--dataset-name", dataset_name, "label for report rows");
    evaluate->add_option("--native-units", native_units, "1 = de-standardize before metrics");

    auto* sweep = app.add_subcommand("sweep", "augmentation study over window strides");
    add_common(sweep, true);
    add_training_opts(sweep);
    sweep->add_option("--strides", strides, "comma-separated strides");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e); // prints usage, exit 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    raw.add("data", data);
    raw.add("schema", schema);
    raw.add("out", out);
    raw.add("checkpoint", checkpoint);
    raw.add("targets", targets);
    raw.add("seed", seed);
    raw.add("context_length", context_length);
    raw.add("stride", stride);
    raw.add("removal_rate", removal_rate);
    raw.add("validation_fraction", validation_fraction);
    raw.add("split_mode", split_mode);
    raw.add("feature_width", feature_width);
    raw.add("heads", heads);
    raw.add("encoder_layers", encoder_layers);
    raw.add("generator_width", generator_width);
    raw.add("task", task);
    raw.add("epochs", epochs);
    raw.add("lr_start", lr_start);
    raw.add("lr_end", lr_end);
    raw.add("clip", clip);
    raw.add("batch_size", batch_size);
    raw.add("dropout", dropout);
    raw.add("synth_channels", channels);
    raw.add("synth_noise", noise);
    raw.add("synth_horizon", horizon_len);
    raw.add("synth_mean_gap", mean_gap);
    raw.add("synth_shift_step", shift_step);
    raw.add("r_grid", r_grid);
    raw.add("seeds", seeds);
    raw.add("strides", strides);
    raw.add("horizons", horizons);
    raw.add("dataset_name", dataset_name);
    raw.add("native_units", native_units);

    try {
        if (synth->parsed()) return cmd_synth(raw);
        if (train_cmd->parsed()) return cmd_train(raw);
        if (impute->parsed()) return cmd_impute(raw);
        if (predict->parsed()) return cmd_predict(raw);
        if (evaluate->parsed()) return cmd_evaluate(raw);
        if (sweep->parsed()) return cmd_sweep(raw);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

} // namespace agg
