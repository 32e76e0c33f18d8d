#include "agg/pipeline.hpp"

#include "agg/error.hpp"
#include "agg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace agg {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

double parse_double(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        raise(ErrorKind::Data, "cannot parse number '" + s + "' (" + context + ")");
    }
}

/// Round-trip-exact decimal rendering.
std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

bool channel_less(const Observation& a, const Observation& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.c_disc != b.c_disc) return a.c_disc < b.c_disc;
    return a.source_index < b.source_index;
}

} // namespace

void PipelineConfig::validate() const {
    if (context_length < 1) raise(ErrorKind::Config, "context_length must be at least 1");
    if (stride < 1 || stride > context_length)
        raise(ErrorKind::Config, "stride must lie in [1, L], got " + std::to_string(stride));
    if (removal_rate < 0.0 || removal_rate >= 1.0)
        raise(ErrorKind::Config, "removal_rate must lie in [0, 1), got " + std::to_string(removal_rate));
    if (validation_fraction <= 0.0 || validation_fraction >= 1.0)
        raise(ErrorKind::Config, "validation_fraction must lie in (0, 1)");
    if (split_mode == SplitMode::Inductive && !(val_range_start < val_range_end))
        raise(ErrorKind::Config, "inductive split requires val_range_start < val_range_end");
}

// ---- ingestion ----

ChannelSchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, "cannot open schema file " + path);
    ChannelSchema schema;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        auto eq = s.find('=');
        if (eq == std::string::npos)
            raise(ErrorKind::Data, "schema line " + std::to_string(lineno) + " is not key=value: " + s);
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        auto names = value.empty() ? std::vector<std::string>{} : split(value, ',');
        if (key == "time") {
            schema.time_name = value;
        } else if (key == "discrete") {
            schema.discrete_names = names;
        } else if (key == "continuous") {
            schema.continuous_names = names;
        } else if (key == "measurement") {
            schema.measurement_names = names;
        } else {
            raise(ErrorKind::Data, "schema line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    if (schema.measurement_names.empty()) raise(ErrorKind::Data, "schema declares no measurement columns");
    schema.vocabularies.assign(schema.discrete_names.size(), {});
    return schema;
}

Dataset load_csv(const std::string& path, ChannelSchema schema, bool grow_vocab) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, "cannot open data file " + path);

    Dataset ds;
    std::string line;
    if (!std::getline(in, line)) {
        ds.schema = std::move(schema);
        return ds; // empty file: empty dataset
    }

    const auto header = split(line, ',');
    std::vector<std::string> expected;
    expected.push_back(schema.time_name);
    for (const auto& n : schema.discrete_names) expected.push_back(n);
    for (const auto& n : schema.continuous_names) expected.push_back(n);
    for (const auto& n : schema.measurement_names) expected.push_back(n);
    if (header != expected) {
        std::string want;
        for (const auto& n : expected) want += (want.empty() ? "" : ",") + n;
        raise(ErrorKind::Data, "CSV header does not match schema; expected '" + want + "'");
    }

    const std::size_t n_disc = schema.discrete_names.size();
    const std::size_t n_cont = schema.continuous_names.size();
    const std::size_t n_y = schema.measurement_names.size();
    int lineno = 1;
    std::int64_t index = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != expected.size())
            raise(ErrorKind::Data, "line " + std::to_string(lineno) + ": expected " + std::to_string(expected.size()) +
                                       " cells, got " + std::to_string(cells.size()));
        Observation obs;
        obs.source_index = index++;
        std::size_t col = 0;
        obs.t = parse_double(cells[col++], "line " + std::to_string(lineno) + " time");
        for (std::size_t f = 0; f < n_disc; ++f)
            obs.c_disc.push_back(schema.category_id(static_cast<std::int64_t>(f), cells[col++], grow_vocab));
        for (std::size_t f = 0; f < n_cont; ++f) {
            obs.c_cont.push_back(
                parse_double(cells[col], "line " + std::to_string(lineno) + " " + schema.continuous_names[f]));
            ++col;
        }
        std::size_t empty_y = 0;
        for (std::size_t f = 0; f < n_y; ++f) {
            if (cells[col].empty()) {
                ++empty_y;
                ++col;
            } else {
                obs.y.push_back(parse_double(cells[col], "line " + std::to_string(lineno) + " " +
                                                             schema.measurement_names[f]));
                ++col;
            }
        }
        if (empty_y == n_y) {
            ds.unlabeled.push_back(std::move(obs));
        } else if (empty_y == 0) {
            ds.observations.push_back(std::move(obs));
        } else {
            raise(ErrorKind::Data, "line " + std::to_string(lineno) + ": partially empty measurement cells");
        }
    }
    ds.schema = std::move(schema);
    return ds;
}

void write_csv(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) raise(ErrorKind::Io, "cannot write data file " + path);
    const ChannelSchema& s = ds.schema;
    out << s.time_name;
    for (const auto& n : s.discrete_names) out << ',' << n;
    for (const auto& n : s.continuous_names) out << ',' << n;
    for (const auto& n : s.measurement_names) out << ',' << n;
    out << '\n';
    for (const auto& obs : ds.observations) {
        out << format_double(obs.t);
        for (std::size_t f = 0; f < s.discrete_names.size(); ++f)
            out << ',' << s.vocabularies[f][static_cast<std::size_t>(obs.c_disc[f])];
        for (double c : obs.c_cont) out << ',' << format_double(c);
        for (double y : obs.y) out << ',' << format_double(y);
        out << '\n';
    }
}

void write_schema(const std::string& path, const ChannelSchema& schema) {
    std::ofstream out(path);
    if (!out) raise(ErrorKind::Io, "cannot write schema file " + path);
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
        return s;
    };
    out << "time=" << schema.time_name << '\n';
    out << "discrete=" << join(schema.discrete_names) << '\n';
    out << "continuous=" << join(schema.continuous_names) << '\n';
    out << "measurement=" << join(schema.measurement_names) << '\n';
}

// ---- standardization ----

std::vector<double> StandardizationStats::standardize_measurement(const std::vector<std::int64_t>& channel,
                                                                  const std::vector<double>& y) const {
    auto it = per_channel.find(channel);
    if (it == per_channel.end()) raise(ErrorKind::Data, "no standardization statistics for channel");
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        out[i] = it->second.constant[i] ? y[i] : (y[i] - it->second.mean[i]) / it->second.stddev[i];
    return out;
}

std::vector<double> StandardizationStats::destandardize_measurement(const std::vector<std::int64_t>& channel,
                                                                    const std::vector<double>& y) const {
    auto it = per_channel.find(channel);
    if (it == per_channel.end()) raise(ErrorKind::Data, "no standardization statistics for channel");
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        out[i] = it->second.constant[i] ? y[i] : y[i] * it->second.stddev[i] + it->second.mean[i];
    return out;
}

StandardizationStats compute_stats(const std::vector<Observation>& observations, std::vector<std::string>* warnings) {
    StandardizationStats stats;
    if (observations.empty()) return stats;

    std::map<std::vector<std::int64_t>, std::vector<const Observation*>> groups;
    for (const auto& obs : observations) groups[obs.c_disc].push_back(&obs);

    for (auto& [channel, members] : groups) {
        const std::size_t d_y = members.front()->y.size();
        StandardizationStats::ChannelStats cs;
        cs.mean.assign(d_y, 0.0);
        cs.stddev.assign(d_y, 0.0);
        cs.constant.assign(d_y, 0);
        if (members.size() < 2)
            raise(ErrorKind::Data, "channel has fewer than 2 observations; cannot standardize");
        for (const auto* obs : members)
            for (std::size_t i = 0; i < d_y; ++i) cs.mean[i] += obs->y[i];
        for (std::size_t i = 0; i < d_y; ++i) cs.mean[i] /= static_cast<double>(members.size());
        for (const auto* obs : members)
            for (std::size_t i = 0; i < d_y; ++i) {
                const double d = obs->y[i] - cs.mean[i];
                cs.stddev[i] += d * d;
            }
        for (std::size_t i = 0; i < d_y; ++i) {
            cs.stddev[i] = std::sqrt(cs.stddev[i] / static_cast<double>(members.size()));
            if (cs.stddev[i] == 0.0) {
                cs.constant[i] = 1;
                if (warnings)
                    warnings->push_back("channel measurement " + std::to_string(i) +
                                        " is constant; passed through unscaled");
            }
        }
        stats.per_channel.emplace(channel, std::move(cs));
    }

    // Time: offset to the earliest observation, scale so the median positive
    // gap between consecutive (sorted) observations is 1.
    std::vector<double> times;
    times.reserve(observations.size());
    for (const auto& obs : observations) times.push_back(obs.t);
    std::sort(times.begin(), times.end());
    stats.time_offset = times.front();
    std::vector<double> gaps;
    for (std::size_t i = 1; i < times.size(); ++i)
        if (times[i] > times[i - 1]) gaps.push_back(times[i] - times[i - 1]);
    if (!gaps.empty()) {
        std::sort(gaps.begin(), gaps.end());
        stats.time_scale = gaps[gaps.size() / 2];
    }
    return stats;
}

std::vector<Observation> apply_standardization(const std::vector<Observation>& observations,
                                               const StandardizationStats& stats) {
    std::vector<Observation> out = observations;
    for (auto& obs : out) {
        if (!obs.y.empty()) obs.y = stats.standardize_measurement(obs.c_disc, obs.y);
        obs.t = stats.standardize_time(obs.t);
    }
    return out;
}

std::pair<Dataset, StandardizationStats> standardize(const Dataset& ds, std::vector<std::string>* warnings) {
    StandardizationStats stats = compute_stats(ds.observations, warnings);
    Dataset out;
    out.schema = ds.schema;
    out.observations = apply_standardization(ds.observations, stats);
    out.unlabeled = apply_standardization(ds.unlabeled, stats);
    out.standardized = true;
    return {std::move(out), std::move(stats)};
}

// ---- target construction ----

std::pair<std::vector<Observation>, std::vector<Observation>> mask_remove(const std::vector<Observation>& observations,
                                                                          double removal_rate, std::uint64_t seed) {
    if (removal_rate < 0.0 || removal_rate >= 1.0)
        raise(ErrorKind::Config, "removal_rate must lie in [0, 1), got " + std::to_string(removal_rate));
    const std::size_t n = observations.size();
    const auto n_targets =
        static_cast<std::size_t>(std::floor(removal_rate * static_cast<double>(n) + 0.5)); // round half-up
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = Rng::derive(seed, 0x6d61736b);
    rng.shuffle(order);
    std::vector<std::uint8_t> is_target(n, 0);
    for (std::size_t i = 0; i < n_targets; ++i) is_target[order[i]] = 1;
    std::pair<std::vector<Observation>, std::vector<Observation>> out;
    for (std::size_t i = 0; i < n; ++i)
        (is_target[i] ? out.second : out.first).push_back(observations[i]);
    return out;
}

std::pair<std::vector<Observation>, std::vector<Observation>> split_targets(const std::vector<Observation>& targets,
                                                                            const PipelineConfig& cfg) {
    if (targets.empty()) raise(ErrorKind::Data, "split_targets: no targets to split");
    std::pair<std::vector<Observation>, std::vector<Observation>> out;
    if (cfg.split_mode == SplitMode::Inductive) {
        for (const auto& t : targets)
            (t.t >= cfg.val_range_start && t.t <= cfg.val_range_end ? out.second : out.first).push_back(t);
        return out;
    }
    const std::size_t n = targets.size();
    const auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(n) + 0.5));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = Rng::derive(cfg.seed, 0x73706c6974);
    rng.shuffle(order);
    std::vector<std::uint8_t> is_val(n, 0);
    for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = 1;
    for (std::size_t i = 0; i < n; ++i)
        (is_val[i] ? out.second : out.first).push_back(targets[i]);
    return out;
}

void sort_observations(std::vector<Observation>& observations) {
    std::stable_sort(observations.begin(), observations.end(), channel_less);
}

std::vector<Sample> build_samples(std::vector<Observation> inputs, std::vector<Observation> targets,
                                  const PipelineConfig& cfg) {
    cfg.validate();
    std::vector<Sample> samples;
    if (inputs.empty()) return samples;
    sort_observations(inputs);
    sort_observations(targets);

    const auto n = static_cast<std::int64_t>(inputs.size());
    const std::int64_t L = cfg.context_length;

    for (std::int64_t start = 0; start < n; start += cfg.stride) {
        const std::int64_t end = std::min(start + L, n);
        const double t_lo = inputs[static_cast<std::size_t>(start)].t;
        const double t_hi = inputs[static_cast<std::size_t>(end - 1)].t;

        // Targets are time-sorted: locate the covered range by binary search.
        auto lo = std::lower_bound(targets.begin(), targets.end(), t_lo,
                                   [](const Observation& o, double t) { return o.t < t; });
        for (auto it = lo; it != targets.end() && it->t <= t_hi; ++it) {
            Sample s;
            s.inputs.assign(inputs.begin() + start, inputs.begin() + end);
            s.tau_g = t_hi - it->t;
            s.target_channel = ChannelSpec{it->c_disc, it->c_cont};
            s.y_true = it->y;
            samples.push_back(std::move(s));
        }
        if (end == n) break; // the window reached the end of the inputs
    }
    return samples;
}

double augmentation_factor(const std::vector<Observation>& inputs, const std::vector<Observation>& targets,
                           const PipelineConfig& cfg) {
    PipelineConfig base = cfg;
    base.stride = base.context_length;
    const auto augmented = static_cast<double>(build_samples(inputs, targets, cfg).size());
    const auto baseline = static_cast<double>(build_samples(inputs, targets, base).size());
    if (baseline == 0.0) raise(ErrorKind::Data, "augmentation_factor: no samples at stride L");
    return augmented / baseline;
}

std::vector<Observation> load_query_csv(const std::string& path, const ChannelSchema& schema) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, "cannot open target file " + path);
    std::string line;
    if (!std::getline(in, line)) return {};

    ChannelSchema working = schema;
    std::vector<std::string> expected;
    expected.push_back(schema.time_name);
    for (const auto& n : schema.discrete_names) expected.push_back(n);
    for (const auto& n : schema.continuous_names) expected.push_back(n);
    if (split(line, ',') != expected) {
        std::string want;
        for (const auto& n : expected) want += (want.empty() ? "" : ",") + n;
        raise(ErrorKind::Data, "target CSV header must be '" + want + "'");
    }

    std::vector<Observation> out;
    int lineno = 1;
    std::int64_t index = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != expected.size())
            raise(ErrorKind::Data, "line " + std::to_string(lineno) + ": expected " + std::to_string(expected.size()) +
                                       " cells, got " + std::to_string(cells.size()));
        Observation obs;
        obs.source_index = index++;
        std::size_t col = 0;
        obs.t = parse_double(cells[col++], "line " + std::to_string(lineno) + " time");
        for (std::size_t f = 0; f < schema.discrete_names.size(); ++f)
            obs.c_disc.push_back(working.category_id(static_cast<std::int64_t>(f), cells[col++], false));
        for (std::size_t f = 0; f < schema.continuous_names.size(); ++f) {
            obs.c_cont.push_back(
                parse_double(cells[col], "line " + std::to_string(lineno) + " " + schema.continuous_names[f]));
            ++col;
        }
        out.push_back(std::move(obs));
    }
    return out;
}

Sample build_query_sample(const std::vector<Observation>& inputs, const Observation& query,
                          std::int64_t context_length) {
    if (inputs.empty()) raise(ErrorKind::Data, "no input observations to condition on");
    std::vector<const Observation*> pool;
    pool.reserve(inputs.size());
    for (const auto& obs : inputs) pool.push_back(&obs);
    std::stable_sort(pool.begin(), pool.end(), [&](const Observation* a, const Observation* b) {
        const double da = std::abs(a->t - query.t), db = std::abs(b->t - query.t);
        if (da != db) return da < db;
        return a->t < b->t;
    });
    const auto take = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(context_length));

    Sample s;
    for (std::size_t i = 0; i < take; ++i) s.inputs.push_back(*pool[i]);
    sort_observations(s.inputs);
    s.tau_g = s.t_ref() - query.t;
    s.target_channel = ChannelSpec{query.c_disc, query.c_cont};
    return s;
}

} // namespace agg
