#pragma once

// Model checkpoint: "GIWRNET", u32 version, then per tensor
// u16 name length, name, u8 rank, u32 extents, f64 values (little-endian), until EOF.

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "giwr/binary_io.hpp"
#include "giwr/diffcore/graph.hpp"

namespace giwr::nets {

inline constexpr char checkpoint_magic[] = "GIWRNET";
inline constexpr std::uint32_t checkpoint_version = 1;

using NamedTensors = std::vector<std::pair<std::string, diff::Tensor>>;

inline std::vector<char> encode_checkpoint(const std::vector<const diff::Param*>& params) {
    io::ByteWriter w;
    w.put_bytes(std::string(checkpoint_magic, 7));
    w.put<std::uint32_t>(checkpoint_version);
    for (const diff::Param* p : params) {
        if (p->name.size() > std::numeric_limits<std::uint16_t>::max()) throw ContractError("checkpoint: name too long");
        w.put<std::uint16_t>(static_cast<std::uint16_t>(p->name.size()));
        w.put_bytes(p->name);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(p->value.rank()));
        for (std::size_t e : p->value.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(e));
        for (double v : p->value.values()) w.put<double>(v);
    }
    return w.bytes();
}

inline void save_checkpoint(const std::string& path, const std::vector<const diff::Param*>& params) {
    const auto bytes = encode_checkpoint(params);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline NamedTensors decode_checkpoint(io::ByteReader r) {
    if (r.get_bytes(7, "magic") != std::string(checkpoint_magic, 7)) throw ParseError("checkpoint: bad magic", 0);
    const std::size_t version_at = r.offset();
    if (r.get<std::uint32_t>("version") != checkpoint_version) {
        throw ParseError("checkpoint: unsupported version", version_at);
    }
    NamedTensors out;
    while (!r.done()) {
        const auto len = r.get<std::uint16_t>("name length");
        std::string name = r.get_bytes(len, "name");
        const auto rank = r.get<std::uint8_t>("rank");
        diff::Shape shape;
        for (std::uint8_t k = 0; k < rank; ++k) shape.push_back(r.get<std::uint32_t>("extent"));
        std::vector<double> values(diff::numel(shape));
        for (double& v : values) v = r.get<double>("tensor values");
        out.emplace_back(std::move(name), diff::Tensor(std::move(shape), std::move(values)));
    }
    return out;
}

inline NamedTensors load_checkpoint(const std::string& path) { return decode_checkpoint(io::ByteReader::from_file(path)); }

// Copies tensors into same-named params; every param must be present with its shape.
inline void restore(const NamedTensors& tensors, const std::vector<diff::Param*>& params) {
    for (diff::Param* p : params) {
        bool found = false;
        for (const auto& [name, t] : tensors) {
            if (name != p->name) continue;
            if (t.shape() != p->value.shape()) {
                throw ShapeError("checkpoint: " + name + " has shape " + diff::to_string(t.shape()) + ", expected " +
                                 diff::to_string(p->value.shape()));
            }
            p->value = t;
            found = true;
            break;
        }
        if (!found) throw ContractError("checkpoint: missing tensor " + p->name);
    }
}

}  // namespace giwr::nets
