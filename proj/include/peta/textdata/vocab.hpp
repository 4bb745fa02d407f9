// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "peta/common.hpp"

namespace peta::textdata {

// Token table with dense ids. Ids 0..7 are reserved: PAD, UNK, MASK and the
// five rare trigger tokens, which therefore exist in every vocabulary and
// never occur in generated clean text.
class Vocab {
public:
    static constexpr int32_t kPad = 0;
    static constexpr int32_t kUnk = 1;
    static constexpr int32_t kMask = 2;
    static constexpr int32_t kFirstTrigger = 3;
    static constexpr int32_t kReserved = 8;

    static const std::vector<std::string>& trigger_tokens();

    static Vocab build(int32_t size);

    int32_t size() const { return static_cast<int32_t>(tokens_.size()); }

    // UNK for unseen tokens.
    int32_t lookup(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? kUnk : it->second;
    }

    bool contains(const std::string& token) const { return index_.count(token) != 0; }

    const std::string& token(int32_t id) const {
        if (id < 0 || id >= size()) throw IndexError("vocab: id " + std::to_string(id) + " out of range");
        return tokens_[static_cast<size_t>(id)];
    }

    bool is_trigger_id(int32_t id) const {
        return id >= kFirstTrigger && id < kFirstTrigger + static_cast<int32_t>(trigger_tokens().size());
    }

    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int32_t> index_;
};

}  // namespace peta::textdata
