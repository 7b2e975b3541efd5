#include "fieldseg/weights_io.hpp"

#include <cstring>

#include <json.hpp>

#include "fieldseg/errors.hpp"
#include "fieldseg/raster_io.hpp"

namespace fieldseg::io {

using nlohmann::json;

void write_weights(const nn::ModelWeights& w, const std::string& path) {
    json entries = json::array();
    std::size_t total = 0;
    for (const nn::ManifestEntry& e : w.manifest) {
        json je;
        je["name"] = e.name;
        je["shape"] = e.shape;
        je["init_rule"] = e.init_rule;
        je["seed"] = e.seed;
        je["offset"] = e.offset;
        entries.push_back(je);
        std::size_t n = 1;
        for (std::size_t x : e.shape) n *= x;
        if (e.offset != total)
            throw FormatError("manifest offsets are not contiguous at " + e.name);
        total += n;
    }
    json header;
    header["magic"] = "fsw1";
    header["entries"] = entries;
    header["total"] = total;

    std::string bytes = header.dump();
    bytes.push_back('\n');
    const std::size_t base = bytes.size();
    bytes.resize(base + total * 8);
    for (const nn::ManifestEntry& e : w.manifest) {
        const DenseTensor& t = w.get(e.name);
        std::memcpy(bytes.data() + base + e.offset * 8, t.data(), t.size() * 8);
    }
    write_atomic(path, bytes);
}

nn::ModelWeights read_weights(const std::string& path) {
    const std::string bytes = read_file(path);
    const std::size_t nl = bytes.find('\n');
    if (nl == std::string::npos) throw FormatError("weights manifest line missing in " + path);
    json header;
    try {
        header = json::parse(bytes.substr(0, nl));
    } catch (const json::exception& e) {
        throw FormatError("weights manifest is not valid JSON: " + std::string(e.what()));
    }

    nn::ModelWeights w;
    std::size_t total = 0;
    try {
        if (header.at("magic").get<std::string>() != "fsw1")
            throw FormatError("unexpected weights magic");
        total = header.at("total").get<std::size_t>();
        for (const json& je : header.at("entries")) {
            nn::ManifestEntry e;
            e.name = je.at("name").get<std::string>();
            e.shape = je.at("shape").get<Shape>();
            e.init_rule = je.at("init_rule").get<std::string>();
            e.seed = je.at("seed").get<std::uint64_t>();
            e.offset = je.at("offset").get<std::size_t>();
            w.manifest.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw FormatError("weights manifest field error: " + std::string(e.what()));
    }

    const std::size_t got = bytes.size() - nl - 1;
    if (got != total * 8)
        throw FormatError("weights blob is " + std::to_string(got) + " bytes, expected " +
                          std::to_string(total * 8));
    const char* blob = bytes.data() + nl + 1;
    for (const nn::ManifestEntry& e : w.manifest) {
        std::size_t n = 1;
        for (std::size_t x : e.shape) n *= x;
        if (e.offset + n > total) throw FormatError("manifest entry overruns blob: " + e.name);
        std::vector<double> values(n);
        std::memcpy(values.data(), blob + e.offset * 8, n * 8);
        w.tensors.emplace(e.name, DenseTensor(e.shape, std::move(values)));
    }
    return w;
}

} // namespace fieldseg::io
