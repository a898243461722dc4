#pragma once

#include <stdexcept>
#include <string>

namespace pbp {

/// Base class of every error raised by the library. `kind()` is the stable
/// name used on the wire and in CSV rows.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define PBP_DEFINE_ERROR(Name)                                            \
    class Name : public Error {                                           \
    public:                                                               \
        explicit Name(const std::string& what) : Error(#Name, what) {}    \
    }

PBP_DEFINE_ERROR(InvalidParams);
PBP_DEFINE_ERROR(DegenerateDemo);
PBP_DEFINE_ERROR(FitFailure);
PBP_DEFINE_ERROR(AlphaOutOfRange);
PBP_DEFINE_ERROR(EmptyBank);
PBP_DEFINE_ERROR(SceneGenerationFailure);
PBP_DEFINE_ERROR(DegenerateSegment);
PBP_DEFINE_ERROR(EmptyLog);
PBP_DEFINE_ERROR(EmptyBatch);
PBP_DEFINE_ERROR(ConfigInvalid);
PBP_DEFINE_ERROR(LogFormatError);
PBP_DEFINE_ERROR(UnknownSession);
PBP_DEFINE_ERROR(MalformedCommand);
PBP_DEFINE_ERROR(InvalidMode);

#undef PBP_DEFINE_ERROR

}  // namespace pbp
