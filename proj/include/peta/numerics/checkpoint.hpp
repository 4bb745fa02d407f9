// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "peta/numerics/params.hpp"

namespace peta::numerics {

// Versioned binary parameter container: magic, version, a JSON metadata
// blob, the named tensors in ParamSet order, then an FNV-1a checksum of all
// preceding bytes. Writes are atomic (temp file + rename) and byte-stable
// for identical inputs.
struct Checkpoint {
    ParamSet params;
    std::string meta_json;
};

void save_checkpoint(const std::string& path, const ParamSet& params, const std::string& meta_json);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace peta::numerics
