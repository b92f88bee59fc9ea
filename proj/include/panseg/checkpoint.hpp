#ifndef PANSEG_CHECKPOINT_HPP
#define PANSEG_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "panseg/image_io.hpp"  // read_file / write_file
#include "panseg/model.hpp"

namespace panseg {

// Checkpoint layout (all integers little-endian):
//   "PANT"  u32 version=1  u32 param_count
//   per parameter: u16 name_len, name bytes, u8 rank, u32 dims[rank],
//                  f32 data[numel] (row-major)
//   u32 config_len, canonical model config text
inline constexpr uint32_t checkpoint_version = 1;

namespace detail {

inline void put_u16le(std::vector<uint8_t>& v, uint16_t x) {
    v.push_back(uint8_t(x));
    v.push_back(uint8_t(x >> 8));
}

inline void put_u32le(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(uint8_t(x));
    v.push_back(uint8_t(x >> 8));
    v.push_back(uint8_t(x >> 16));
    v.push_back(uint8_t(x >> 24));
}

inline void put_f32le(std::vector<uint8_t>& v, float x) {
    uint32_t bits;
    std::memcpy(&bits, &x, 4);
    put_u32le(v, bits);
}

struct ByteReader {
    const std::vector<uint8_t>& buf;
    size_t pos = 0;
    std::string what;

    void need(size_t n) {
        require(buf.size() - pos >= n, ErrorKind::format, what,
                ": truncated checkpoint (wanted ", n, " more bytes at offset ", pos, ")");
    }
    uint8_t u8() {
        need(1);
        return buf[pos++];
    }
    uint16_t u16() {
        need(2);
        const uint16_t v = uint16_t(buf[pos]) | uint16_t(buf[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        const uint32_t v = uint32_t(buf[pos]) | uint32_t(buf[pos + 1]) << 8 |
                           uint32_t(buf[pos + 2]) << 16 | uint32_t(buf[pos + 3]) << 24;
        pos += 4;
        return v;
    }
    float f32() {
        const uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
};

}  // namespace detail

template <class S>
std::vector<uint8_t> encode_checkpoint(PaNet<S>& model) {
    std::vector<uint8_t> out;
    const auto params = model.params();
    out.insert(out.end(), {'P', 'A', 'N', 'T'});
    detail::put_u32le(out, checkpoint_version);
    detail::put_u32le(out, uint32_t(params.size()));
    for (const Parameter<S>* p : params) {
        require(p->name.size() <= 0xFFFF, ErrorKind::invalid_argument,
                "checkpoint: parameter name too long: ", p->name);
        detail::put_u16le(out, uint16_t(p->name.size()));
        out.insert(out.end(), p->name.begin(), p->name.end());
        out.push_back(uint8_t(p->value.rank()));
        for (int d = 0; d < p->value.rank(); ++d)
            detail::put_u32le(out, uint32_t(p->value.dim(d)));
        for (int64_t i = 0; i < p->value.numel(); ++i)
            detail::put_f32le(out, float(p->value[i]));
    }
    const std::string cfg = model_config_text(model.config());
    detail::put_u32le(out, uint32_t(cfg.size()));
    out.insert(out.end(), cfg.begin(), cfg.end());
    return out;
}

template <class S>
void save_checkpoint(PaNet<S>& model, const std::string& path) {
    detail::write_file(path, encode_checkpoint(model));
}

///// Rebuild a model from a checkpoint: the embedded config defines the
/// architecture, then every parameter is restored by name in order. Name,
/// count, or shape disagreements reject the whole file.
template <class S = float>
std::unique_ptr<PaNet<S>> decode_checkpoint(const std::vector<uint8_t>& bytes,
                                            const std::string& what) {
    detail::ByteReader r{bytes, 0, what};
    require(r.str(4) == "PANT", ErrorKind::format, what, ": not a checkpoint file (bad magic)");
    const uint32_t ver = r.u32();
    require(ver == checkpoint_version, ErrorKind::version, what, ": checkpoint version ", ver,
            " unsupported (expected ", checkpoint_version, ")");
    const uint32_t count = r.u32();

    struct Record {
        std::string name;
        Shape shape;
        std::vector<float> data;
    };
    std::vector<Record> records;
    records.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        Record rec;
        rec.name = r.str(r.u16());
        const int rank = r.u8();
        require(rank >= 1 && rank <= 4, ErrorKind::format, what, ": parameter ", rec.name,
                " has rank ", rank);
        int64_t numel = 1;
        for (int d = 0; d < rank; ++d) {
            const uint32_t dim = r.u32();
            require(dim >= 1 && dim <= (1u << 24), ErrorKind::format, what, ": parameter ",
                    rec.name, " has dimension ", dim);
            rec.shape.push_back(int(dim));
            numel *= dim;
        }
        rec.data.resize(size_t(numel));
        for (int64_t k = 0; k < numel; ++k) rec.data[size_t(k)] = r.f32();
        records.push_back(std::move(rec));
    }
    const std::string cfg_text = r.str(r.u32());
    require(r.pos == bytes.size(), ErrorKind::format, what, ": ", bytes.size() - r.pos,
            " trailing bytes after checkpoint payload");
    const ModelConfig cfg = parse_model_config_text(cfg_text);

    auto model = std::make_unique<PaNet<S>>(cfg, 0);
    const auto params = model->params();
    require(params.size() == records.size(), ErrorKind::format, what, ": checkpoint has ",
            records.size(), " parameters, model built from its config has ", params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        Parameter<S>* p = params[i];
        const Record& rec = records[i];
        require(p->name == rec.name, ErrorKind::format, what, ": parameter ", i, " is \"",
                rec.name, "\", expected \"", p->name, "\"");
        require(p->value.shape() == rec.shape, ErrorKind::shape_mismatch, what, ": parameter ",
                rec.name, " has shape ", shape_str(rec.shape), ", expected ",
                shape_str(p->value.shape()));
        for (int64_t k = 0; k < p->value.numel(); ++k) p->value[k] = S(rec.data[size_t(k)]);
    }
    return model;
}

template <class S = float>
std::unique_ptr<PaNet<S>> load_checkpoint(const std::string& path) {
    return decode_checkpoint<S>(detail::read_file(path), path);
}

/// Load and additionally insist the embedded config matches `expected`.
template <class S = float>
std::unique_ptr<PaNet<S>> load_checkpoint(const std::string& path, const ModelConfig& expected) {
    auto model = load_checkpoint<S>(path);
    require(model->config() == expected, ErrorKind::invalid_argument, path,
            ": checkpoint config does not match the requested config\ncheckpoint:\n",
            model_config_text(model->config()), "requested:\n", model_config_text(expected));
    return model;
}

}  // namespace panseg

#endif  // PANSEG_CHECKPOINT_HPP
