#include "agg/checkpoint.hpp"

#include "agg/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace agg {

namespace {

constexpr char kMagic[8] = {'A', 'G', 'G', 'C', 'K', 'P', 'T', '1'};

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) raise(ErrorKind::Io, "cannot write checkpoint " + path);
    }
    void u64(std::uint64_t v) {
        char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
        out_.write(buf, 8);
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u64(s.size());
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    void raw(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
    void tensor(const Tensor& t) {
        u64(t.rank());
        for (auto d : t.shape()) u64(static_cast<std::uint64_t>(d));
        for (double x : t.values()) f64(x);
    }
    bool ok() const { return static_cast<bool>(out_); }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) raise(ErrorKind::Io, "cannot open checkpoint " + path);
    }
    std::uint64_t u64() {
        char buf[8];
        in_.read(buf, 8);
        if (in_.gcount() != 8) raise(ErrorKind::Incompatible, "checkpoint truncated");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint64_t n = u64();
        if (n > (1ull << 32)) raise(ErrorKind::Incompatible, "checkpoint corrupt: oversized string");
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) raise(ErrorKind::Incompatible, "checkpoint truncated");
        return s;
    }
    void raw(char* p, std::size_t n) {
        in_.read(p, static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) raise(ErrorKind::Incompatible, "checkpoint truncated");
    }
    Tensor tensor() {
        const std::uint64_t rank = u64();
        if (rank > 8) raise(ErrorKind::Incompatible, "checkpoint corrupt: tensor rank " + std::to_string(rank));
        std::vector<std::int64_t> shape(rank);
        std::int64_t numel = 1;
        for (auto& d : shape) {
            d = static_cast<std::int64_t>(u64());
            numel *= d;
        }
        if (numel < 0 || numel > (1ll << 32)) raise(ErrorKind::Incompatible, "checkpoint corrupt: tensor size");
        std::vector<double> values(static_cast<std::size_t>(numel));
        for (auto& x : values) x = f64();
        return Tensor(std::move(shape), std::move(values));
    }

private:
    std::ifstream in_;
};

void write_schema_section(Writer& w, const ChannelSchema& s) {
    w.str(s.time_name);
    w.u64(s.discrete_names.size());
    for (std::size_t f = 0; f < s.discrete_names.size(); ++f) {
        w.str(s.discrete_names[f]);
        w.u64(s.vocabularies[f].size());
        for (const auto& label : s.vocabularies[f]) w.str(label);
    }
    w.u64(s.continuous_names.size());
    for (const auto& n : s.continuous_names) w.str(n);
    w.u64(s.measurement_names.size());
    for (const auto& n : s.measurement_names) w.str(n);
}

ChannelSchema read_schema_section(Reader& r) {
    ChannelSchema s;
    s.time_name = r.str();
    const std::uint64_t n_disc = r.u64();
    for (std::uint64_t f = 0; f < n_disc; ++f) {
        s.discrete_names.push_back(r.str());
        std::vector<std::string> vocab(r.u64());
        for (auto& label : vocab) label = r.str();
        s.vocabularies.push_back(std::move(vocab));
    }
    std::vector<std::string> cont(r.u64());
    for (auto& n : cont) n = r.str();
    s.continuous_names = std::move(cont);
    std::vector<std::string> meas(r.u64());
    for (auto& n : meas) n = r.str();
    s.measurement_names = std::move(meas);
    return s;
}

void write_stats_section(Writer& w, const StandardizationStats& st) {
    w.f64(st.time_offset);
    w.f64(st.time_scale);
    w.u64(st.per_channel.size());
    for (const auto& [channel, cs] : st.per_channel) {
        w.u64(channel.size());
        for (auto id : channel) w.u64(static_cast<std::uint64_t>(id));
        w.u64(cs.mean.size());
        for (std::size_t i = 0; i < cs.mean.size(); ++i) {
            w.f64(cs.mean[i]);
            w.f64(cs.stddev[i]);
            w.u64(cs.constant[i]);
        }
    }
}

StandardizationStats read_stats_section(Reader& r) {
    StandardizationStats st;
    st.time_offset = r.f64();
    st.time_scale = r.f64();
    const std::uint64_t n_channels = r.u64();
    for (std::uint64_t c = 0; c < n_channels; ++c) {
        std::vector<std::int64_t> channel(r.u64());
        for (auto& id : channel) id = static_cast<std::int64_t>(r.u64());
        StandardizationStats::ChannelStats cs;
        const std::uint64_t d_y = r.u64();
        for (std::uint64_t i = 0; i < d_y; ++i) {
            cs.mean.push_back(r.f64());
            cs.stddev.push_back(r.f64());
            cs.constant.push_back(static_cast<std::uint8_t>(r.u64()));
        }
        st.per_channel.emplace(std::move(channel), std::move(cs));
    }
    return st;
}

void write_model_config(Writer& w, const ModelConfig& m) {
    w.u64(static_cast<std::uint64_t>(m.feature_width));
    w.u64(static_cast<std::uint64_t>(m.heads));
    w.u64(static_cast<std::uint64_t>(m.encoder_layers));
    w.f64(m.dropout);
    w.u64(static_cast<std::uint64_t>(m.context_length));
    w.u64(static_cast<std::uint64_t>(m.generator_width));
    w.u64(static_cast<std::uint64_t>(m.output_dim));
    w.u64(m.task == Task::Classification ? 1 : 0);
    w.f64(m.leaky_slope);
    w.f64(m.layer_norm_eps);
}

ModelConfig read_model_config(Reader& r) {
    ModelConfig m;
    m.feature_width = static_cast<std::int64_t>(r.u64());
    m.heads = static_cast<std::int64_t>(r.u64());
    m.encoder_layers = static_cast<std::int64_t>(r.u64());
    m.dropout = r.f64();
    m.context_length = static_cast<std::int64_t>(r.u64());
    m.generator_width = static_cast<std::int64_t>(r.u64());
    m.output_dim = static_cast<std::int64_t>(r.u64());
    m.task = r.u64() ? Task::Classification : Task::Regression;
    m.leaky_slope = r.f64();
    m.layer_norm_eps = r.f64();
    return m;
}

} // namespace

Checkpoint Checkpoint::capture(const AggModel& model, const StandardizationStats& stats, const AdamState& adam,
                               std::string meta) {
    Checkpoint ckpt;
    ckpt.model = model.config();
    ckpt.schema = model.schema();
    ckpt.stats = stats;
    for (int id = 0; id < model.params().size(); ++id) ckpt.params.push_back(model.params().param(id));
    ckpt.adam = adam;
    ckpt.meta = std::move(meta);
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    Writer w(path);
    w.raw(kMagic, sizeof(kMagic));
    w.str(ckpt.meta);
    write_model_config(w, ckpt.model);
    write_schema_section(w, ckpt.schema);
    write_stats_section(w, ckpt.stats);
    w.u64(ckpt.params.size());
    for (const auto& p : ckpt.params) {
        w.str(p.name);
        w.tensor(p.value);
    }
    w.u64(static_cast<std::uint64_t>(ckpt.adam.t));
    w.f64(ckpt.adam.beta1);
    w.f64(ckpt.adam.beta2);
    w.f64(ckpt.adam.eps);
    w.u64(ckpt.adam.m.size());
    for (std::size_t i = 0; i < ckpt.adam.m.size(); ++i) {
        w.tensor(ckpt.adam.m[i]);
        w.tensor(ckpt.adam.v[i]);
    }
    if (!w.ok()) raise(ErrorKind::Io, "failed to write checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[8];
    r.raw(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        raise(ErrorKind::Incompatible, "not an AGGCKPT1 checkpoint: " + path);
    Checkpoint ckpt;
    ckpt.meta = r.str();
    ckpt.model = read_model_config(r);
    ckpt.schema = read_schema_section(r);
    ckpt.stats = read_stats_section(r);
    const std::uint64_t n_params = r.u64();
    for (std::uint64_t i = 0; i < n_params; ++i) {
        Parameter p;
        p.name = r.str();
        p.value = r.tensor();
        ckpt.params.push_back(std::move(p));
    }
    ckpt.adam.t = static_cast<std::int64_t>(r.u64());
    ckpt.adam.beta1 = r.f64();
    ckpt.adam.beta2 = r.f64();
    ckpt.adam.eps = r.f64();
    const std::uint64_t n_moments = r.u64();
    for (std::uint64_t i = 0; i < n_moments; ++i) {
        ckpt.adam.m.push_back(r.tensor());
        ckpt.adam.v.push_back(r.tensor());
    }
    return ckpt;
}

AggModel restore_model(const Checkpoint& ckpt) {
    AggModel model(ckpt.model, ckpt.schema, 0);
    if (static_cast<std::int64_t>(ckpt.params.size()) != model.params().size())
        raise(ErrorKind::Incompatible, "checkpoint parameter count does not match the architecture");
    for (const auto& p : ckpt.params) {
        if (!model.params().contains(p.name))
            raise(ErrorKind::Incompatible, "checkpoint carries unknown parameter " + p.name);
        const int id = model.params().id_of(p.name);
        if (!model.params().value(id).same_shape(p.value))
            raise(ErrorKind::Incompatible, "checkpoint parameter " + p.name + " has shape " + p.value.shape_str() +
                                               ", expected " + model.params().value(id).shape_str());
        model.params().value(id) = p.value;
    }
    return model;
}

} // namespace agg
