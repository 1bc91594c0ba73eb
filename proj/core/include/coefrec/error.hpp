#pragma once

#include <stdexcept>
#include <string>

namespace coefrec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad size, wrong mesh, n = 0, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Meshes that are not related by power-of-two refinement were combined.
class MeshMismatch : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace coefrec
