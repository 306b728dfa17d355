#pragma once

#include <stdexcept>
#include <string>

namespace regfuse {

// Failures reading or writing files (missing, unwritable, short reads).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A file was readable but its contents do not match the expected format.
class FormatError : public std::runtime_error {
public:
    enum class Kind { MalformedHeader, TruncatedPayload, UnsupportedMaxval, UnsupportedType, Schema };

    FormatError(Kind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

// Undefined numerical quantities: zero variance, empty masks, singular transforms.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace regfuse
