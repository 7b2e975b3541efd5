#include "fieldseg/raster_io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fieldseg/errors.hpp"

namespace fieldseg::io {

namespace fs = std::filesystem;
using nlohmann::json;

void write_atomic(const std::string& path, const std::string& bytes) {
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("cannot rename " + tmp.string() + " to " + target.string() + ": " +
                      ec.message());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failure on " + path);
    return bytes;
}

void RasterContainer::validate() const {
    if (dims.size() != 3 && dims.size() != 4)
        throw FormatError("raster dims must be [C,H,W] or [C,T,H,W]");
    if (dtype != "f32" && dtype != "f64")
        throw FormatError("raster dtype must be f32 or f64, got " + dtype);
    std::size_t n = 1;
    for (std::size_t e : dims) {
        if (e == 0) throw FormatError("raster dims must be positive");
        n *= e;
    }
    if (data.size() != n)
        throw FormatError("raster payload has " + std::to_string(data.size()) +
                          " elements, dims expect " + std::to_string(n));
    if (!band_names.empty() && band_names.size() != dims[0])
        throw FormatError("band_names length does not match the leading extent");
    if (geotransform[1] == 0.0 || geotransform[5] == 0.0)
        throw FormatError("geotransform pixel scales must be nonzero");
}

post::RasterMeta RasterContainer::meta() const {
    post::RasterMeta m;
    m.width = dims.back();
    m.height = dims[dims.size() - 2];
    m.geotransform = geotransform;
    m.crs_tag = crs;
    return m;
}

RasterContainer RasterContainer::read(const std::string& path) {
    const std::string bytes = read_file(path);
    const std::size_t nl = bytes.find('\n');
    if (nl == std::string::npos) throw FormatError("raster header line missing in " + path);

    json header;
    try {
        header = json::parse(bytes.substr(0, nl));
    } catch (const json::exception& e) {
        throw FormatError("raster header is not valid JSON: " + std::string(e.what()));
    }

    RasterContainer rc;
    try {
        if (header.at("magic").get<std::string>() != "fsr1")
            throw FormatError("unexpected raster magic");
        rc.dims = header.at("dims").get<Shape>();
        rc.dtype = header.at("dtype").get<std::string>();
        rc.band_names = header.value("band_names", std::vector<std::string>{});
        const auto gt = header.at("geotransform").get<std::vector<double>>();
        if (gt.size() != 6) throw FormatError("geotransform must have 6 entries");
        std::copy(gt.begin(), gt.end(), rc.geotransform.begin());
        rc.crs = header.value("crs", std::string("local"));
        rc.transformed = header.value("transformed", false);
    } catch (const json::exception& e) {
        throw FormatError("raster header field error: " + std::string(e.what()));
    }

    std::size_t n = 1;
    for (std::size_t e : rc.dims) n *= e;
    const std::size_t elem = rc.dtype == "f32" ? 4 : 8;
    const std::size_t expected = n * elem;
    const std::size_t got = bytes.size() - nl - 1;
    if (got != expected)
        throw FormatError("raster payload is " + std::to_string(got) + " bytes, expected " +
                          std::to_string(expected));

    std::vector<double> values(n);
    const char* p = bytes.data() + nl + 1;
    if (rc.dtype == "f32") {
        for (std::size_t i = 0; i < n; ++i) {
            float f;
            std::memcpy(&f, p + i * 4, 4);
            values[i] = static_cast<double>(f);
        }
    } else {
        std::memcpy(values.data(), p, n * 8);
    }
    rc.data = DenseTensor(rc.dims, std::move(values));
    rc.validate();
    return rc;
}

void RasterContainer::write(const std::string& path) const {
    validate();
    json header;
    header["magic"] = "fsr1";
    header["dims"] = dims;
    header["dtype"] = dtype;
    header["band_names"] = band_names;
    header["geotransform"] = std::vector<double>(geotransform.begin(), geotransform.end());
    header["crs"] = crs;
    header["transformed"] = transformed;

    std::string bytes = header.dump();
    bytes.push_back('\n');
    const std::size_t n = data.size();
    if (dtype == "f32") {
        bytes.reserve(bytes.size() + n * 4);
        for (std::size_t i = 0; i < n; ++i) {
            const float f = static_cast<float>(data[i]);
            char buf[4];
            std::memcpy(buf, &f, 4);
            bytes.append(buf, 4);
        }
    } else {
        const std::size_t base = bytes.size();
        bytes.resize(base + n * 8);
        std::memcpy(bytes.data() + base, data.data(), n * 8);
    }
    write_atomic(path, bytes);
}

} // namespace fieldseg::io
