#include <openssl/evp.h>
#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "plenopress/byteio.hpp"
#include "plenopress/codec_model.hpp"
#include "plenopress/error.hpp"

// Container layout, little-endian:
//   "FPPM" u8 version
//   u32 N, u32 M, i32 heads, u8 scale (0 per-head, 1 full), u64 seed
//   u32 block count; per block: u16 name length, name, u8 rank, u32 dims[rank]
//   raw f32 values of every block in the same order

namespace plenopress {

namespace {

constexpr char kMagic[4] = {'F', 'P', 'P', 'M'};
constexpr std::uint8_t kVersion = 1;

std::string shape_text(const std::vector<int>& shape) {
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
    return s;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const ModelParams& params) {
    ByteWriter w;
    auto& model = const_cast<ModelParams&>(params);
    w.bytes(kMagic, 4);
    w.le<std::uint8_t>(kVersion);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(params.config.n));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(params.config.m));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(params.config.heads));
    w.le<std::uint8_t>(params.config.scale == nn::AttentionScale::Full ? 1 : 0);
    w.le<std::uint64_t>(params.config.seed);
    std::uint32_t blocks = 0;
    model.visit([&](const std::string&, const std::vector<int>&, const std::vector<double>&) { ++blocks; });
    w.le<std::uint32_t>(blocks);
    model.visit([&](const std::string& name, const std::vector<int>& shape, const std::vector<double>&) {
        w.le<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.le<std::uint8_t>(static_cast<std::uint8_t>(shape.size()));
        for (int d : shape) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    });
    model.visit([&](const std::string& name, const std::vector<int>&, const std::vector<double>& v) {
        for (double x : v) {
            const float f = static_cast<float>(x);
            if (!std::isfinite(f)) throw ContractError("save_model: non-finite value in " + name);
            w.f32(f);
        }
    });
    return std::move(w.data());
}

void save_model(const ModelParams& params, const std::filesystem::path& path) {
    const auto bytes = serialize_model(params);
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed: " + path.string());
    }
    std::ostringstream manifest;
    manifest << "# model " << to_hex(model_id(params)) << "\n# name shape crc32\n";
    const_cast<ModelParams&>(params).visit(
        [&](const std::string& name, const std::vector<int>& shape, const std::vector<double>& v) {
            std::vector<float> f(v.begin(), v.end());
            const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(f.data()), static_cast<uInt>(f.size() * sizeof(float)));
            char hex[16];
            std::snprintf(hex, sizeof hex, "%08lx", static_cast<unsigned long>(crc));
            manifest << name << ' ' << shape_text(shape) << ' ' << hex << '\n';
        });
    std::ofstream out(path.string() + ".manifest");
    if (!out) throw IoError("cannot write " + path.string() + ".manifest");
    out << manifest.str();
}

ModelParams load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    const std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ByteReader r(data, path.string());
    if (r.str(4) != std::string(kMagic, 4)) throw ContractError(path.string() + ": not a model container");
    const auto version = r.le<std::uint8_t>();
    if (version != kVersion) throw ContractError(path.string() + ": unsupported model version " + std::to_string(version));
    ModelConfig cfg;
    cfg.n = static_cast<int>(r.le<std::uint32_t>());
    cfg.m = static_cast<int>(r.le<std::uint32_t>());
    cfg.heads = static_cast<int>(r.le<std::uint32_t>());
    cfg.scale = r.le<std::uint8_t>() ? nn::AttentionScale::Full : nn::AttentionScale::PerHead;
    cfg.seed = r.le<std::uint64_t>();
    ModelParams model(cfg);
    const auto blocks = r.le<std::uint32_t>();
    std::uint32_t seen = 0;
    model.visit([&](const std::string& name, const std::vector<int>& shape, const std::vector<double>&) {
        ++seen;
        if (seen > blocks) throw ContractError(path.string() + ": missing block " + name);
        const std::string stored = r.str(r.le<std::uint16_t>());
        std::vector<int> stored_shape(r.le<std::uint8_t>());
        for (auto& d : stored_shape) d = static_cast<int>(r.le<std::uint32_t>());
        if (stored != name || stored_shape != shape)
            throw ContractError(path.string() + ": block " + stored + " " + shape_text(stored_shape) + " does not match " +
                                name + " " + shape_text(shape));
    });
    if (seen != blocks) throw ContractError(path.string() + ": unexpected extra blocks");
    model.visit([&](const std::string&, const std::vector<int>&, std::vector<double>& v) {
        for (auto& x : v) x = static_cast<double>(r.f32());
    });
    if (!r.done()) throw ContractError(path.string() + ": trailing bytes after model data");
    return model;
}

ModelParams load_or_init_model(const std::filesystem::path& path) {
    if (path.extension() == ".cfg") return init_model(ModelConfig::from_config(KeyValueFile::load(path)));
    return load_model(path);
}

ModelId model_id(const ModelParams& params) {
    const auto bytes = serialize_model(params);
    ModelId id{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), id.data(), &len, EVP_md5(), nullptr) != 1 || len != id.size())
        throw ContractError("model_id: digest failed");
    return id;
}

std::string to_hex(const ModelId& id) {
    std::string s;
    char buf[3];
    for (auto b : id) {
        std::snprintf(buf, sizeof buf, "%02x", b);
        s += buf;
    }
    return s;
}

}  // namespace plenopress
