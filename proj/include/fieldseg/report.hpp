#pragma once

#include <string>
#include <utility>
#include <vector>

namespace fieldseg::io {

/// Line-oriented report record: `<kind> key=value ...` with a stable field
/// order, diffable in CI.
std::string format_value(double v);
std::string report_line(const std::string& kind,
                        const std::vector<std::pair<std::string, std::string>>& fields);

} // namespace fieldseg::io
