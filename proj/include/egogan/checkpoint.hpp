#pragma once

#include <cstring>
#include <fstream>

#include "egogan/config.hpp"
#include "egogan/hash.hpp"

// Checkpoint archive: magic, format version, content hash, the full run
// config as JSON, named parameter and buffer tensors (little-endian float32
// with shape headers), optimizer state, epoch/step counters, and the
// training RNG stream.

namespace egogan {

namespace ckpt_detail {

inline void put_bytes(std::string& out, const void* p, size_t n) {
    out.append(static_cast<const char*>(p), n);
}
template <class T>
void put_pod(std::string& out, const T& v) {
    put_bytes(out, &v, sizeof(T));
}
inline void put_str(std::string& out, const std::string& s) {
    const u32 n = static_cast<u32>(s.size());
    put_pod(out, n);
    put_bytes(out, s.data(), s.size());
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    void read_bytes(void* p, size_t n) {
        if (pos + n > buf.size()) throw IoError("checkpoint: truncated file");
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    template <class T>
    T pod() {
        T v;
        read_bytes(&v, sizeof(T));
        return v;
    }
    std::string str() {
        const u32 n = pod<u32>();
        std::string s(n, '\0');
        read_bytes(s.data(), n);
        return s;
    }
};

inline void put_tensor(std::string& out, const std::string& name, const Tensor<float>& t) {
    put_str(out, name);
    const u8 dtype = 0; // float32
    put_pod(out, dtype);
    const u8 ndim = static_cast<u8>(t.shape.size());
    put_pod(out, ndim);
    for (i64 d : t.shape) put_pod(out, static_cast<u32>(d));
    put_bytes(out, t.ptr(), static_cast<size_t>(t.numel()) * sizeof(float));
}

inline std::pair<std::string, Tensor<float>> read_tensor(Reader& r) {
    std::string name = r.str();
    const u8 dtype = r.pod<u8>();
    if (dtype != 0) throw IoError("checkpoint: unsupported tensor dtype");
    const u8 ndim = r.pod<u8>();
    std::vector<i64> shape(ndim);
    for (auto& d : shape) d = r.pod<u32>();
    Tensor<float> t = Tensor<float>::uninit(shape);
    r.read_bytes(t.ptr(), static_cast<size_t>(t.numel()) * sizeof(float));
    return {std::move(name), std::move(t)};
}

} // namespace ckpt_detail

inline void save_checkpoint(const std::string& path, TrainState<float>& ts, const RunConfig& config) {
    using namespace ckpt_detail;
    std::string payload;
    put_str(payload, config.dump());

    auto params = ts.model.all_params();
    put_pod(payload, static_cast<u32>(params.size()));
    for (auto& p : params) put_tensor(payload, p.name, *p.value);
    auto buffers = ts.model.all_buffers();
    put_pod(payload, static_cast<u32>(buffers.size()));
    for (auto& b : buffers) put_tensor(payload, b.name, *b.value);

    put_pod(payload, static_cast<u32>(ts.sgd.velocity.size()));
    for (auto& v : ts.sgd.velocity) put_tensor(payload, "sgd.v", v);
    for (const AdamState<float>* a : {&ts.adam_g, &ts.adam_d}) {
        put_pod(payload, static_cast<u32>(a->m.size()));
        put_pod(payload, static_cast<i64>(a->t));
        for (auto& m : a->m) put_tensor(payload, "adam.m", m);
        for (auto& v : a->v) put_tensor(payload, "adam.v", v);
    }
    put_pod(payload, ts.epoch);
    put_pod(payload, ts.step);
    put_pod(payload, ts.rng.state);
    put_pod(payload, ts.rng.spare_);
    put_pod(payload, static_cast<u8>(ts.rng.have_spare_ ? 1 : 0));

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("save_checkpoint: cannot open " + path);
    const u32 version = 1;
    f.write("EGCK", 4);
    f.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::string hash = sha1_hex(payload);
    f.write(hash.data(), 40);
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!f) throw IoError("save_checkpoint: write failed for " + path);
}

struct LoadedCheckpoint {
    RunConfig config;
    TrainState<float> state;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    using namespace ckpt_detail;
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_checkpoint: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "EGCK", 4) != 0) throw IoError("load_checkpoint: bad magic in " + path);
    u32 version = 0;
    f.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != 1)
        throw IoError("load_checkpoint: unsupported format version " + std::to_string(version) + " in " + path);
    char hash[41] = {};
    f.read(hash, 40);
    std::string payload((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (sha1_hex(payload) != std::string(hash, 40)) throw IoError("load_checkpoint: content hash mismatch in " + path);

    Reader r{payload};
    RunConfig config;
    config.j = nlohmann::json::parse(r.str());
    LoadedCheckpoint out{config, TrainState<float>(config.model_config(), config.train_hp(), config.seed())};
    TrainState<float>& ts = out.state;

    const u32 n_params = r.pod<u32>();
    auto params = ts.model.all_params();
    if (n_params != params.size())
        throw IoError("load_checkpoint: parameter count mismatch (file " + std::to_string(n_params) + ", model " +
                      std::to_string(params.size()) + ")");
    for (u32 i = 0; i < n_params; ++i) {
        auto [name, t] = read_tensor(r);
        if (name != params[i].name) throw IoError("load_checkpoint: unexpected tensor '" + name + "'");
        if (t.shape != params[i].value->shape) throw IoError("load_checkpoint: shape mismatch for '" + name + "'");
        *params[i].value = std::move(t);
    }
    const u32 n_buffers = r.pod<u32>();
    auto buffers = ts.model.all_buffers();
    if (n_buffers != buffers.size()) throw IoError("load_checkpoint: buffer count mismatch");
    for (u32 i = 0; i < n_buffers; ++i) {
        auto [name, t] = read_tensor(r);
        if (name != buffers[i].name) throw IoError("load_checkpoint: unexpected buffer '" + name + "'");
        *buffers[i].value = std::move(t);
    }
    const u32 n_vel = r.pod<u32>();
    ts.sgd.velocity.clear();
    for (u32 i = 0; i < n_vel; ++i) ts.sgd.velocity.push_back(read_tensor(r).second);
    for (AdamState<float>* a : {&ts.adam_g, &ts.adam_d}) {
        const u32 n = r.pod<u32>();
        a->t = r.pod<i64>();
        a->m.clear();
        a->v.clear();
        for (u32 i = 0; i < n; ++i) a->m.push_back(read_tensor(r).second);
        for (u32 i = 0; i < n; ++i) a->v.push_back(read_tensor(r).second);
    }
    ts.epoch = r.pod<i64>();
    ts.step = r.pod<i64>();
    ts.rng.state = r.pod<u64>();
    ts.rng.spare_ = r.pod<double>();
    ts.rng.have_spare_ = r.pod<u8>() != 0;
    return out;
}

} // namespace egogan
