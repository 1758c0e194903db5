#pragma once
// Core scalar-templated dense types and error taxonomy shared by all modules.

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cmr {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

using MatrixF = Matrix<float>;
using VectorF = Vector<float>;
using MatrixD = Matrix<double>;
using VectorD = Vector<double>;

using Index = Eigen::Index;

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

// (head, relation) pair identifying a query; also the retrieval filter key.
struct SourceKey {
    EntityId head = 0;
    RelationId relation = 0;

    friend bool operator==(const SourceKey&, const SourceKey&) = default;
};

// Malformed textual input (triple files, description files, query files).
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Binary artifact does not match its declared format.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Content hash of a binary artifact does not match its payload.
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A documented invariant of the data model was violated.
struct InvariantError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem-level failure (missing file, short read, failed write).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Configuration field out of its documented range.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace cmr
