#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gpq {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A vector (or sub-vector) with norm below the zero tolerance was passed to
// a normalization routine. `subspace` identifies the offending block when
// raised from intra_normalize, and is npos otherwise.
struct ZeroVectorError : Error {
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t subspace;

    explicit ZeroVectorError(const std::string& what, std::size_t m = npos)
        : Error(what), subspace(m) {}
};

struct ShapeMismatchError : Error {
    using Error::Error;
};

struct InvalidDistributionError : Error {
    using Error::Error;
};

struct InvalidArgumentError : Error {
    using Error::Error;
};

struct DegenerateBatchError : Error {
    using Error::Error;
};

struct NonFiniteGradientError : Error {
    using Error::Error;
};

struct EmptyDatasetError : Error {
    using Error::Error;
};

struct IndexOutOfRangeError : Error {
    using Error::Error;
};

struct MalformedBytesError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct BadMagicError : Error {
    using Error::Error;
};

struct VersionMismatchError : Error {
    using Error::Error;
};

// Raised when a binary stream ends mid-structure. `offset` is the byte
// position at which the truncation was detected.
struct TruncatedError : Error {
    std::size_t offset;

    explicit TruncatedError(const std::string& what, std::size_t at)
        : Error(what + " at byte offset " + std::to_string(at)), offset(at) {}
};

struct UnknownIdError : Error {
    using Error::Error;
};

struct TooFewItemsError : Error {
    using Error::Error;
};

struct InsufficientItemsError : Error {
    using Error::Error;
};

struct InsufficientClassesError : Error {
    using Error::Error;
};

struct InvalidConfigError : Error {
    using Error::Error;
};

}  // namespace gpq
