#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecgmix/errors.hpp"
#include "ecgmix/rng.hpp"

namespace ecgmix {

// One named leaf tensor with a same-shape gradient slot.
template <typename T>
struct param {
    std::string name;
    std::vector<int> shape;
    std::vector<T> v;
    std::vector<T> g;

    void resize(std::string n, std::vector<int> s) {
        name = std::move(n);
        shape = std::move(s);
        std::size_t total = 1;
        for (int d : shape) total *= static_cast<std::size_t>(d);
        v.assign(total, T(0));
        g.assign(total, T(0));
    }

    std::size_t size() const { return v.size(); }
};

// Non-trainable state (BN running statistics).
template <typename T>
struct buffer {
    std::string name;
    std::vector<int> shape;
    std::vector<T> v;

    void resize(std::string n, std::vector<int> s) {
        name = std::move(n);
        shape = std::move(s);
        std::size_t total = 1;
        for (int d : shape) total *= static_cast<std::size_t>(d);
        v.assign(total, T(0));
    }
};

// Registry of pointers into the layers that own the tensors. Names must be
// unique; registration order is the serialization order.
template <typename T>
struct param_store {
    std::vector<param<T>*> params;
    std::vector<buffer<T>*> buffers;

    void add(param<T>& p) {
        for (auto* q : params)
            if (q->name == p.name) throw config_error("duplicate parameter name: " + p.name);
        params.push_back(&p);
    }
    void add(buffer<T>& b) {
        for (auto* q : buffers)
            if (q->name == b.name) throw config_error("duplicate buffer name: " + b.name);
        buffers.push_back(&b);
    }

    void zero_grad() {
        for (auto* p : params) std::fill(p->g.begin(), p->g.end(), T(0));
    }

    std::size_t n_values() const {
        std::size_t n = 0;
        for (auto* p : params) n += p->size();
        return n;
    }
};

// ---------------------------------------------------------------------------
// Checkpoint format: magic + version, a JSON metadata blob, then a flat list
// of (name, shape, float32 data) records. Trainable parameters come first,
// BN running statistics after, each flagged.
// ---------------------------------------------------------------------------

constexpr char k_ckpt_magic[8] = {'E', 'C', 'G', 'M', 'I', 'X', 'C', 'P'};
constexpr std::uint32_t k_ckpt_version = 1;

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t x) {
    out.write(reinterpret_cast<const char*>(&x), 4);
}

inline std::uint32_t read_u32(std::istream& in) {
    std::uint32_t x = 0;
    in.read(reinterpret_cast<char*>(&x), 4);
    return x;
}

template <typename T>
void write_entry(std::ostream& out, const std::string& name, const std::vector<int>& shape,
                 const std::vector<T>& values, std::uint8_t flags) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    out.put(static_cast<char>(flags));
    write_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) write_u32(out, static_cast<std::uint32_t>(d));
    write_u32(out, static_cast<std::uint32_t>(values.size()));
    for (T x : values) {
        float f = static_cast<float>(x);
        out.write(reinterpret_cast<const char*>(&f), 4);
    }
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const param_store<T>& store,
                     const nlohmann::json& meta) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write checkpoint: " + path);
    out.write(k_ckpt_magic, 8);
    detail::write_u32(out, k_ckpt_version);
    const std::string meta_str = meta.dump();
    detail::write_u32(out, static_cast<std::uint32_t>(meta_str.size()));
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    detail::write_u32(out, static_cast<std::uint32_t>(store.params.size() + store.buffers.size()));
    for (const auto* p : store.params) detail::write_entry(out, p->name, p->shape, p->v, 0);
    for (const auto* b : store.buffers) detail::write_entry(out, b->name, b->shape, b->v, 1);
    if (!out) throw io_error("short checkpoint write: " + path);
}

struct checkpoint_entry {
    std::string name;
    std::vector<int> shape;
    std::vector<float> values;
    bool is_buffer = false;
};

struct checkpoint {
    nlohmann::json meta;
    std::vector<checkpoint_entry> entries;

    const checkpoint_entry* find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    }
};

inline checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot read checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, k_ckpt_magic, 8) != 0)
        throw io_error("not a checkpoint file: " + path);
    const auto version = detail::read_u32(in);
    if (version != k_ckpt_version) throw io_error("unsupported checkpoint version");
    const auto meta_len = detail::read_u32(in);
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), meta_len);
    checkpoint ck;
    ck.meta = nlohmann::json::parse(meta_str);
    const auto n_entries = detail::read_u32(in);
    ck.entries.resize(n_entries);
    for (auto& e : ck.entries) {
        const auto name_len = detail::read_u32(in);
        e.name.resize(name_len);
        in.read(e.name.data(), name_len);
        e.is_buffer = in.get() != 0;
        const auto ndim = detail::read_u32(in);
        e.shape.resize(ndim);
        for (auto& d : e.shape) d = static_cast<int>(detail::read_u32(in));
        const auto n = detail::read_u32(in);
        e.values.resize(n);
        in.read(reinterpret_cast<char*>(e.values.data()), static_cast<std::streamsize>(n) * 4);
        if (!in) throw io_error("truncated checkpoint: " + path);
    }
    return ck;
}

template <typename T>
void restore_params(const checkpoint& ck, param_store<T>& store) {
    for (auto* p : store.params) {
        const auto* e = ck.find(p->name);
        if (!e) throw io_error("checkpoint missing parameter: " + p->name);
        if (e->values.size() != p->size()) throw shape_error("checkpoint shape mismatch: " + p->name);
        for (std::size_t i = 0; i < p->size(); ++i) p->v[i] = static_cast<T>(e->values[i]);
    }
    for (auto* b : store.buffers) {
        const auto* e = ck.find(b->name);
        if (!e) throw io_error("checkpoint missing buffer: " + b->name);
        if (e->values.size() != b->v.size()) throw shape_error("checkpoint shape mismatch: " + b->name);
        for (std::size_t i = 0; i < b->v.size(); ++i) b->v[i] = static_cast<T>(e->values[i]);
    }
}

}  // namespace ecgmix
