#pragma once

#include <stdexcept>
#include <string>

namespace fieldseg {

/// Error taxonomy shared by the library and the CLI. Each category carries a
/// stable process exit code (documented in the CLI --help footer).
class Error : public std::runtime_error {
public:
    Error(std::string kind, int exit_code, const std::string& msg)
        : std::runtime_error(msg), kind_(std::move(kind)), exit_code_(exit_code) {}

    const std::string& kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return exit_code_; }

private:
    std::string kind_;
    int exit_code_;
};

#define FIELDSEG_DEFINE_ERROR(Name, Code)                                     \
    class Name : public Error {                                               \
    public:                                                                   \
        explicit Name(const std::string& msg) : Error(#Name, Code, msg) {}    \
    };

FIELDSEG_DEFINE_ERROR(DimensionError, 2)
FIELDSEG_DEFINE_ERROR(FormatError, 3)
FIELDSEG_DEFINE_ERROR(ConfigError, 4)
FIELDSEG_DEFINE_ERROR(WeightError, 5)
FIELDSEG_DEFINE_ERROR(IoError, 6)
FIELDSEG_DEFINE_ERROR(RangeError, 7)
FIELDSEG_DEFINE_ERROR(TrainingError, 8)
FIELDSEG_DEFINE_ERROR(DegenerateBandError, 9)
FIELDSEG_DEFINE_ERROR(DegenerateSampleError, 10)
FIELDSEG_DEFINE_ERROR(EmptyGeometryError, 11)

#undef FIELDSEG_DEFINE_ERROR

} // namespace fieldseg
