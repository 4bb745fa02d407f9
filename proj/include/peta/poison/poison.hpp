// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "peta/numerics/rng.hpp"
#include "peta/textdata/corpus.hpp"

namespace peta::poison {

using numerics::Rng;
using textdata::Dataset;
using textdata::ExampleRecord;
using textdata::Vocab;

// Trigger definition: which tokens get inserted, how many times per example,
// and which class the backdoor should force.
struct TriggerSpec {
    std::vector<std::string> tokens = {"cf"};
    int32_t insertions = 3;
    int32_t target_label = 0;

    std::vector<int32_t> resolve_ids(const Vocab& vocab) const;
    void validate(const Vocab& vocab, int32_t class_count) const;
};

enum class LabelMode { mixed, dirty };

struct PoisonPolicy {
    LabelMode mode = LabelMode::mixed;
    double rate = 0.0;  // used by build_rate_poisoned; the partition transform poisons all of D1*
};

// The three-way data partition with poisoning applied to D1*.
struct SplitBundle {
    Dataset d1;      // poisoned: trigger inserted, label forced to target
    Dataset d2;      // clean
    Dataset dprime;  // clean, reserved for the (simulated or real) PEFT stage
    uint64_t seed = 0;
    TriggerSpec trigger;
};

// Inserts the trigger token sequence at `insertions` uniformly random
// positions, preserving the original token order, then truncates to max_len.
ExampleRecord insert_trigger(const ExampleRecord& x, const TriggerSpec& spec, const Vocab& vocab, int32_t max_len,
                             Rng& rng);

// Applies the 100% mixed-label transform to D1* of a halved split. The two
// clean parts are passed through untouched.
SplitBundle poison_partition(const textdata::SplitHalves& halves, const TriggerSpec& spec, const Vocab& vocab,
                             int32_t max_len, uint64_t seed, LabelMode mode = LabelMode::mixed);

// Poisons exactly floor(rate * n) records, chosen by seeded sampling. In
// dirty mode only records whose label differs from the target are eligible.
Dataset build_rate_poisoned(const Dataset& data, const TriggerSpec& spec, const PoisonPolicy& policy,
                            const Vocab& vocab, int32_t max_len, uint64_t seed);

// All unordered pairs of the base tokens, canonically sorted, as two-token
// trigger specs (the LWP combinatorial trigger set).
std::vector<TriggerSpec> combinatorial_triggers(std::vector<std::string> base_tokens, int32_t target_label);

}  // namespace peta::poison
