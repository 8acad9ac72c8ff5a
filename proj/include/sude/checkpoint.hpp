#pragma once

// Checkpoint format: the magic string "SUDE1", a little-endian u64 manifest
// length, a JSON manifest (config hash, parameter names, shapes, byte
// offsets), then one blob of little-endian 32-bit floats in manifest order.
// Parameters are widened back to doubles on load.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sude/array.hpp"
#include "sude/denoiser.hpp"

namespace sude {

constexpr char kCheckpointMagic[] = "SUDE1";

inline std::vector<std::uint8_t> checkpoint_bytes(const Denoiser& model,
                                                  const std::string& config_hash) {
    nlohmann::json manifest;
    manifest["config_hash"] = config_hash;
    manifest["d_x"] = model.dims().d_x;
    manifest["d_c"] = model.dims().d_c;
    manifest["d_time"] = model.dims().d_time;
    manifest["hidden"] = model.dims().hidden;
    manifest["vocab"] = {{"categories", model.vocab().n_categories},
                         {"attributes", model.vocab().n_attributes},
                         {"contexts", model.vocab().n_contexts},
                         {"subjects", model.vocab().n_subjects}};
    nlohmann::json params = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, value] : model.params()) {
        params.push_back({{"name", name},
                          {"shape", value.shape},
                          {"offset", offset}});
        offset += value.size() * 4;
    }
    manifest["params"] = std::move(params);
    std::string mstr = manifest.dump();

    std::vector<std::uint8_t> out;
    out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 5);
    std::uint64_t mlen = mstr.size();
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<std::uint8_t>((mlen >> (8 * i)) & 0xff));
    out.insert(out.end(), mstr.begin(), mstr.end());
    for (const auto& [name, value] : model.params())
        for (double v : value.values) {
            float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            for (int i = 0; i < 4; ++i)
                out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
        }
    return out;
}

inline void save_checkpoint(const Denoiser& model, const std::string& config_hash,
                            const std::string& path) {
    std::vector<std::uint8_t> bytes = checkpoint_bytes(model, config_hash);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

struct LoadedCheckpoint {
    Denoiser model;
    std::string config_hash;
};

inline LoadedCheckpoint load_checkpoint_bytes(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 13 || std::memcmp(bytes.data(), kCheckpointMagic, 5) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    std::uint64_t mlen = 0;
    for (int i = 0; i < 8; ++i)
        mlen |= static_cast<std::uint64_t>(bytes[5 + i]) << (8 * i);
    if (bytes.size() < 13 + mlen)
        throw std::runtime_error("checkpoint: truncated manifest");
    nlohmann::json manifest = nlohmann::json::parse(
        bytes.begin() + 13, bytes.begin() + 13 + static_cast<std::ptrdiff_t>(mlen));

    DenoiserDims dims;
    dims.d_x = manifest.at("d_x");
    dims.d_c = manifest.at("d_c");
    dims.d_time = manifest.at("d_time");
    dims.hidden = manifest.at("hidden");
    Vocabulary vocab;
    vocab.n_categories = manifest.at("vocab").at("categories");
    vocab.n_attributes = manifest.at("vocab").at("attributes");
    vocab.n_contexts = manifest.at("vocab").at("contexts");
    vocab.n_subjects = manifest.at("vocab").at("subjects");

    LoadedCheckpoint lc{Denoiser(dims, vocab, 0), manifest.at("config_hash")};
    std::size_t blob = 13 + mlen;
    for (const auto& p : manifest.at("params")) {
        std::string name = p.at("name");
        std::vector<std::size_t> shape = p.at("shape").get<std::vector<std::size_t>>();
        std::uint64_t offset = p.at("offset");
        Array a = Array::zeros(shape);
        std::size_t base = blob + offset;
        if (base + a.size() * 4 > bytes.size())
            throw std::runtime_error("checkpoint: truncated blob at " + name);
        for (std::size_t i = 0; i < a.size(); ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b)
                bits |= static_cast<std::uint32_t>(bytes[base + i * 4 + b]) << (8 * b);
            float f;
            std::memcpy(&f, &bits, 4);
            a.values[i] = static_cast<double>(f);
        }
        lc.model.param(name) = std::move(a);
    }
    return lc;
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return load_checkpoint_bytes(bytes);
}

}  // namespace sude
