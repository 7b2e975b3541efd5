#include "fieldseg/model_config.hpp"

#include <json.hpp>

#include "fieldseg/errors.hpp"
#include "fieldseg/raster_io.hpp"

namespace fieldseg::io {

using nlohmann::json;

namespace {

json patch_to_json(const PatchSpec& p) {
    return json{{"c", p.c}, {"h", p.h}, {"w", p.w}};
}

PatchSpec patch_from_json(const json& j) {
    return PatchSpec{j.at("c").get<std::size_t>(), j.at("h").get<std::size_t>(),
                     j.at("w").get<std::size_t>()};
}

std::string compaction_name(nn::Compaction c) {
    return c == nn::Compaction::mean_time ? "mean" : "conv_t";
}

nn::Compaction compaction_from(const std::string& s) {
    if (s == "mean") return nn::Compaction::mean_time;
    if (s == "conv_t") return nn::Compaction::conv_time;
    throw ConfigError("unknown compaction mode: " + s);
}

} // namespace

std::string to_json(const nn::UNet3DConfig& cfg) {
    json j;
    j["arch"] = "unet3d";
    j["stage_repeats"] = cfg.stage_repeats;
    j["init_features"] = cfg.init_features;
    j["in_channels"] = cfg.in_channels;
    j["patch"] = patch_to_json(cfg.patch);
    j["causal"] = cfg.causal;
    j["mbconv_expansion"] = cfg.mbconv_expansion;
    j["se_reduction"] = cfg.se_reduction;
    j["ffn_expansion"] = cfg.ffn_expansion;
    j["compaction"] = compaction_name(cfg.compaction);
    j["compact_t"] = cfg.compact_t;
    return j.dump();
}

std::string to_json(const nn::FusionConfig& cfg) {
    json j;
    j["arch"] = "fusion";
    j["encoder_repeats"] = cfg.encoder_repeats;
    j["decoder_repeats"] = cfg.decoder_repeats;
    j["init_features"] = cfg.init_features;
    j["in_channels_optical"] = cfg.in_channels_optical;
    j["in_channels_sar"] = cfg.in_channels_sar;
    j["patch"] = patch_to_json(cfg.patch);
    j["mbconv_expansion"] = cfg.mbconv_expansion;
    j["se_reduction"] = cfg.se_reduction;
    j["ffn_expansion"] = cfg.ffn_expansion;
    j["compaction"] = compaction_name(cfg.compaction);
    j["compact_t"] = cfg.compact_t;
    return j.dump();
}

ModelConfig parse_model_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError("model config is not valid JSON: " + std::string(e.what()));
    }
    try {
        const std::string arch = j.at("arch").get<std::string>();
        if (arch == "unet3d") {
            nn::UNet3DConfig cfg;
            cfg.stage_repeats = j.value("stage_repeats", cfg.stage_repeats);
            cfg.init_features = j.value("init_features", cfg.init_features);
            cfg.in_channels = j.value("in_channels", cfg.in_channels);
            if (j.contains("patch")) cfg.patch = patch_from_json(j["patch"]);
            cfg.causal = j.value("causal", cfg.causal);
            cfg.mbconv_expansion = j.value("mbconv_expansion", cfg.mbconv_expansion);
            cfg.se_reduction = j.value("se_reduction", cfg.se_reduction);
            cfg.ffn_expansion = j.value("ffn_expansion", cfg.ffn_expansion);
            cfg.compaction = compaction_from(j.value("compaction", std::string("mean")));
            cfg.compact_t = j.value("compact_t", cfg.compact_t);
            cfg.validate();
            return cfg;
        }
        if (arch == "fusion") {
            nn::FusionConfig cfg;
            cfg.encoder_repeats = j.value("encoder_repeats", cfg.encoder_repeats);
            cfg.decoder_repeats = j.value("decoder_repeats", cfg.decoder_repeats);
            cfg.init_features = j.value("init_features", cfg.init_features);
            cfg.in_channels_optical = j.value("in_channels_optical", cfg.in_channels_optical);
            cfg.in_channels_sar = j.value("in_channels_sar", cfg.in_channels_sar);
            if (j.contains("patch")) cfg.patch = patch_from_json(j["patch"]);
            cfg.mbconv_expansion = j.value("mbconv_expansion", cfg.mbconv_expansion);
            cfg.se_reduction = j.value("se_reduction", cfg.se_reduction);
            cfg.ffn_expansion = j.value("ffn_expansion", cfg.ffn_expansion);
            cfg.compaction = compaction_from(j.value("compaction", std::string("mean")));
            cfg.compact_t = j.value("compact_t", cfg.compact_t);
            cfg.validate();
            return cfg;
        }
        throw ConfigError("unknown arch: " + arch);
    } catch (const json::exception& e) {
        throw ConfigError("model config field error: " + std::string(e.what()));
    }
}

ModelConfig read_model_config(const std::string& path) {
    return parse_model_config(read_file(path));
}

void write_model_config(const ModelConfig& cfg, const std::string& path) {
    std::string body = std::visit([](const auto& c) { return to_json(c); }, cfg);
    body.push_back('\n');
    write_atomic(path, body);
}

} // namespace fieldseg::io
