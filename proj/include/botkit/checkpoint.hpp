#pragma once

// Binary checkpoint container.
//
// Layout: magic "BOTN", u32 version, u32 entry count, then per entry a
// length-prefixed name, a dtype code (1 = f32, 2 = f64), u32 rank, u64
// extents, and the raw little-endian payload. A length-prefixed UTF-8
// key=value document trails the entries. Values round-trip bit exactly.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "tensor.hpp"
#include "util.hpp"

namespace botkit {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are written little-endian");

template <class T>
constexpr std::uint8_t dtype_code();
template <>
constexpr std::uint8_t dtype_code<float>() {
    return 1;
}
template <>
constexpr std::uint8_t dtype_code<double>() {
    return 2;
}

inline const char* dtype_name(std::uint8_t code) {
    switch (code) {
        case 1: return "f32";
        case 2: return "f64";
        default: return "unknown";
    }
}

struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    struct Entry {
        std::string name;
        std::uint8_t dtype = 0;
        Shape shape;
        std::vector<unsigned char> bytes;
    };

    std::vector<Entry> entries;  // insertion order is the file order
    std::vector<std::pair<std::string, std::string>> metadata;

    bool has(const std::string& name) const { return find(name) != nullptr; }

    const Entry* find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    }

    template <class T>
    void add(const std::string& name, const Shape& shape, const T* values) {
        if (has(name)) throw std::invalid_argument("checkpoint: duplicate entry '" + name + "'");
        Entry e;
        e.name = name;
        e.dtype = dtype_code<T>();
        e.shape = shape;
        e.bytes.resize(shape_numel(shape) * sizeof(T));
        std::memcpy(e.bytes.data(), values, e.bytes.size());
        entries.push_back(std::move(e));
    }

    template <class T>
    void add(const std::string& name, const Tensor<T>& t) {
        add(name, t.shape(), t.data().data());
    }

    template <class T>
    void add(const std::string& name, const std::vector<T>& v) {
        add(name, Shape{v.size()}, v.data());
    }

    template <class T>
    std::vector<T> values(const std::string& name) const {
        const Entry* e = find(name);
        if (!e) throw std::runtime_error("checkpoint: missing entry '" + name + "'");
        if (e->dtype != dtype_code<T>())
            throw std::runtime_error("checkpoint: entry '" + name + "' holds " + dtype_name(e->dtype) +
                                     ", requested " + dtype_name(dtype_code<T>()));
        std::vector<T> out(shape_numel(e->shape));
        std::memcpy(out.data(), e->bytes.data(), e->bytes.size());
        return out;
    }

    template <class T>
    Tensor<T> tensor(const std::string& name) const {
        const Entry* e = find(name);
        if (!e) throw std::runtime_error("checkpoint: missing entry '" + name + "'");
        return Tensor<T>::from_data(e->shape, values<T>(name));
    }

    void set_meta(const std::string& key, const std::string& value) {
        for (auto& [k, v] : metadata)
            if (k == key) {
                v = value;
                return;
            }
        metadata.emplace_back(key, value);
    }

    const std::string* meta(const std::string& key) const {
        for (const auto& [k, v] : metadata)
            if (k == key) return &v;
        return nullptr;
    }

    std::string meta_or_throw(const std::string& key) const {
        const std::string* v = meta(key);
        if (!v) throw std::runtime_error("checkpoint: missing metadata key '" + key + "'");
        return *v;
    }

    void save(std::ostream& os) const {
        write_raw(os, "BOTN", 4);
        write_u32(os, kVersion);
        write_u32(os, static_cast<std::uint32_t>(entries.size()));
        for (const auto& e : entries) {
            write_u32(os, static_cast<std::uint32_t>(e.name.size()));
            write_raw(os, e.name.data(), e.name.size());
            os.put(static_cast<char>(e.dtype));
            write_u32(os, static_cast<std::uint32_t>(e.shape.size()));
            for (std::size_t ext : e.shape) {
                std::uint64_t v = ext;
                write_raw(os, &v, sizeof v);
            }
            write_raw(os, e.bytes.data(), e.bytes.size());
        }
        std::string doc;
        for (const auto& [k, v] : metadata) doc += k + "=" + v + "\n";
        write_u32(os, static_cast<std::uint32_t>(doc.size()));
        write_raw(os, doc.data(), doc.size());
        if (!os) throw std::runtime_error("checkpoint: write failed");
    }

    void save_file(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
        save(os);
    }

    static Checkpoint load(std::istream& is) {
        char magic[4];
        if (!is.read(magic, 4) || std::memcmp(magic, "BOTN", 4) != 0)
            throw std::runtime_error("checkpoint: bad magic, not a checkpoint file");
        std::uint32_t version = read_u32(is, "header");
        if (version != kVersion)
            throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
        std::uint32_t count = read_u32(is, "header");
        Checkpoint ckpt;
        for (std::uint32_t i = 0; i < count; ++i) {
            Entry e;
            std::uint32_t name_len = read_u32(is, "entry name length");
            if (name_len > (1u << 16)) throw std::runtime_error("checkpoint: implausible entry name length");
            e.name.resize(name_len);
            read_raw(is, e.name.data(), name_len, "entry name");
            int dtype = is.get();
            if (dtype != 1 && dtype != 2)
                throw std::runtime_error("checkpoint: entry '" + e.name + "' has unknown dtype code " +
                                         std::to_string(dtype));
            e.dtype = static_cast<std::uint8_t>(dtype);
            std::uint32_t rank = read_u32(is, ("rank of '" + e.name + "'").c_str());
            if (rank > 8) throw std::runtime_error("checkpoint: entry '" + e.name + "' has implausible rank");
            std::size_t numel = 1;
            for (std::uint32_t r = 0; r < rank; ++r) {
                std::uint64_t ext = 0;
                read_raw(is, &ext, sizeof ext, ("extents of '" + e.name + "'").c_str());
                if (ext == 0 || numel > (std::size_t(1) << 33) / std::max<std::uint64_t>(ext, 1))
                    throw std::runtime_error("checkpoint: entry '" + e.name + "' has implausible extents");
                e.shape.push_back(static_cast<std::size_t>(ext));
                numel *= static_cast<std::size_t>(ext);
            }
            std::size_t elem = (e.dtype == 1) ? sizeof(float) : sizeof(double);
            e.bytes.resize(numel * elem);
            read_raw(is, e.bytes.data(), e.bytes.size(), ("payload of '" + e.name + "'").c_str());
            if (ckpt.has(e.name)) throw std::runtime_error("checkpoint: duplicate entry '" + e.name + "'");
            ckpt.entries.push_back(std::move(e));
        }
        std::uint32_t doc_len = read_u32(is, "metadata length");
        std::string doc(doc_len, '\0');
        read_raw(is, doc.data(), doc_len, "metadata");
        for (const std::string& line : split(doc, '\n')) {
            if (line.empty()) continue;
            auto eq = line.find('=');
            if (eq == std::string::npos) throw std::runtime_error("checkpoint: malformed metadata line '" + line + "'");
            ckpt.metadata.emplace_back(line.substr(0, eq), line.substr(eq + 1));
        }
        return ckpt;
    }

    static Checkpoint load_file(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
        return load(is);
    }

  private:
    static void write_raw(std::ostream& os, const void* p, std::size_t n) {
        os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    static void write_u32(std::ostream& os, std::uint32_t v) { write_raw(os, &v, sizeof v); }
    static void read_raw(std::istream& is, void* p, std::size_t n, const char* what) {
        if (!is.read(static_cast<char*>(p), static_cast<std::streamsize>(n)))
            throw std::runtime_error(std::string("checkpoint: truncated while reading ") + what);
    }
    static std::uint32_t read_u32(std::istream& is, const char* what) {
        std::uint32_t v = 0;
        read_raw(is, &v, sizeof v, what);
        return v;
    }
};

}  // namespace botkit
