#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "lyra/config_io.hpp"
#include "lyra/model.hpp"

namespace lyra {

// Checkpoint file layout: magic "LYRA1\n", a JSON header holding the model
// config and an ordered tensor manifest {name, shape, dtype, byte_offset},
// a single '\0', then the little-endian IEEE-754 payload in manifest order.

namespace detail {

template <class S>
const char* dtype_name() {
    if constexpr (std::is_same_v<S, double>) return "f64";
    else return "f32";
}

inline constexpr char kCheckpointMagic[] = "LYRA1\n";

}  // namespace detail

template <class S>
void save_checkpoint(LyraModelT<S>& model, const std::string& path) {
    nlohmann::json manifest = nlohmann::json::array();
    std::size_t offset = 0;
    auto params = model.parameters();
    for (auto& np : params) {
        manifest.push_back({{"name", np.name},
                            {"shape", np.param->value->shape},
                            {"dtype", detail::dtype_name<S>()},
                            {"byte_offset", offset}});
        offset += np.param->value->size() * sizeof(S);
    }
    nlohmann::json header{{"config", to_json(model.cfg)}, {"manifest", manifest}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValueError("checkpoint: cannot open " + path + " for writing");
    out.write(detail::kCheckpointMagic, 6);
    const std::string hdr = header.dump();
    out.write(hdr.data(), std::streamsize(hdr.size()));
    out.put('\0');
    for (auto& np : params) {
        const auto& data = np.param->value->data;
        out.write(reinterpret_cast<const char*>(data.data()),
                  std::streamsize(data.size() * sizeof(S)));
    }
    if (!out) throw ValueError("checkpoint: write failed for " + path);
}

template <class S>
LyraModelT<S> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValueError("checkpoint: cannot open " + path);

    char magic[6];
    in.read(magic, 6);
    if (in.gcount() != 6 || std::memcmp(magic, detail::kCheckpointMagic, 6) != 0)
        throw CheckpointError(CheckpointError::Kind::VersionMismatch,
                              "checkpoint: unrecognized magic bytes in " + path);

    std::string hdr;
    char ch;
    while (in.get(ch) && ch != '\0') hdr.push_back(ch);
    if (!in)
        throw CheckpointError(CheckpointError::Kind::Truncated,
                              "checkpoint: header terminator missing in " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hdr);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(CheckpointError::Kind::ManifestMismatch,
                              std::string("checkpoint: malformed header: ") + e.what());
    }

    LyraConfig cfg = lyra_config_from_json(header.at("config"));
    Rng scratch(0);  // structure only; every value is overwritten below
    LyraModelT<S> model = build<S>(cfg, scratch);
    auto params = model.parameters();

    const auto& manifest = header.at("manifest");
    if (!manifest.is_array() || manifest.size() != params.size())
        throw CheckpointError(CheckpointError::Kind::ManifestMismatch,
                              "checkpoint: manifest entry count does not match model");

    const std::streampos payload_start = in.tellg();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& entry = manifest[i];
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        const std::string dtype = entry.at("dtype").get<std::string>();
        if (name != params[i].name || shape != params[i].param->value->shape ||
            dtype != detail::dtype_name<S>())
            throw CheckpointError(CheckpointError::Kind::ManifestMismatch,
                                  "checkpoint: manifest mismatch at tensor " + name);
        const std::size_t byte_offset = entry.at("byte_offset").get<std::size_t>();
        in.seekg(payload_start + std::streampos(byte_offset));
        auto& data = params[i].param->value->data;
        in.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size() * sizeof(S)));
        if (std::size_t(in.gcount()) != data.size() * sizeof(S))
            throw CheckpointError(CheckpointError::Kind::Truncated,
                                  "checkpoint: payload truncated at tensor " + name);
    }
    return model;
}

}  // namespace lyra
