#include "pacia/checkpoint.hpp"

#include <fmt/format.h>

#include <fstream>
#include <json.hpp>

#include "pacia/config.hpp"

namespace pacia {

using nlohmann::json;

void save_checkpoint(const Model& model, std::uint64_t seed, const std::string& path) {
    json j;
    j["format"] = kCheckpointFormat;
    j["seed"] = seed;
    j["config"] = model_config_to_json(model.cfg);
    json params = json::object();
    for (const Param& p : model.params) {
        params[p.name] = json{{"shape", p.value.shape()}, {"values", p.value.values()}};
    }
    j["params"] = std::move(params);
    std::ofstream out(path);
    if (!out) throw std::runtime_error(fmt::format("cannot write checkpoint '{}'", path));
    out << j.dump();
    out << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open checkpoint '{}'", path));
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(fmt::format("checkpoint '{}': {}", path, e.what()));
    }
    if (j.value("format", "") != kCheckpointFormat) {
        throw std::runtime_error(fmt::format("checkpoint '{}': unsupported format tag '{}'", path,
                                             j.value("format", "")));
    }
    LoadedCheckpoint loaded{build_model(model_config_from_json(j.at("config")), 0),
                            j.value("seed", std::uint64_t{0})};
    const json& params = j.at("params");
    std::size_t filled = 0;
    for (Param& p : loaded.model.params) {
        if (!params.contains(p.name)) {
            throw std::runtime_error(
                fmt::format("checkpoint '{}': missing parameter '{}'", path, p.name));
        }
        const json& jp = params[p.name];
        const auto shape = jp.at("shape").get<std::vector<std::size_t>>();
        auto values = jp.at("values").get<std::vector<double>>();
        if (shape != p.value.shape()) {
            throw std::runtime_error(fmt::format("checkpoint '{}': parameter '{}' has shape {}, "
                                                 "model expects {}",
                                                 path, p.name, shape_str(shape),
                                                 shape_str(p.value.shape())));
        }
        p.value = Tensor::from(shape, std::move(values));
        ++filled;
    }
    if (filled != params.size()) {
        throw std::runtime_error(fmt::format(
            "checkpoint '{}': {} parameters in file but model has {}", path, params.size(), filled));
    }
    return loaded;
}

}  // namespace pacia
