// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace peta {

// Error hierarchy. ConfigError maps to exit code 1, everything else to 2.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

class IndexError : public Error {
public:
    explicit IndexError(const std::string& msg) : Error(msg) {}
};

class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// FNV-1a 64-bit, used for artifact/manifest content hashes.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(s.data(), s.size());
}

std::string hex64(uint64_t v);

}  // namespace peta
