#include "fieldseg/report.hpp"

#include <cmath>
#include <cstdio>

namespace fieldseg::io {

std::string format_value(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string report_line(const std::string& kind,
                        const std::vector<std::pair<std::string, std::string>>& fields) {
    std::string line = kind;
    for (const auto& [key, value] : fields) {
        line += ' ';
        line += key;
        line += '=';
        line += value;
    }
    line += '\n';
    return line;
}

} // namespace fieldseg::io
