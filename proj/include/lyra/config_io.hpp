#pragma once

#include "json.hpp"
#include "lyra/model.hpp"

namespace lyra {

inline nlohmann::json to_json(const LyraConfig& c) {
    return nlohmann::json{{"d_input", c.d_input},
                          {"d_model", c.d_model},
                          {"pgc_hiddens", c.pgc_hiddens},
                          {"num_s4", c.num_s4},
                          {"d_state", c.d_state},
                          {"d_output", c.d_output},
                          {"dropout", c.dropout},
                          {"final_dropout", c.final_dropout},
                          {"prenorm", c.prenorm}};
}

inline LyraConfig lyra_config_from_json(const nlohmann::json& j) {
    LyraConfig c;
    try {
        if (j.contains("d_input")) c.d_input = j.at("d_input").get<std::size_t>();
        if (j.contains("d_model")) c.d_model = j.at("d_model").get<std::size_t>();
        if (j.contains("pgc_hiddens"))
            c.pgc_hiddens = j.at("pgc_hiddens").get<std::vector<std::size_t>>();
        if (j.contains("num_s4")) c.num_s4 = j.at("num_s4").get<std::size_t>();
        if (j.contains("d_state")) c.d_state = j.at("d_state").get<std::size_t>();
        if (j.contains("d_output")) c.d_output = j.at("d_output").get<std::size_t>();
        if (j.contains("dropout")) c.dropout = j.at("dropout").get<double>();
        if (j.contains("final_dropout")) c.final_dropout = j.at("final_dropout").get<double>();
        if (j.contains("prenorm")) c.prenorm = j.at("prenorm").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: model section malformed: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace lyra
