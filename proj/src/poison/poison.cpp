// SPDX-License-Identifier: Apache-2.0
#include "peta/poison/poison.hpp"

#include <algorithm>
#include <cmath>

namespace peta::poison {

std::vector<int32_t> TriggerSpec::resolve_ids(const Vocab& vocab) const {
    std::vector<int32_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) {
        if (!vocab.contains(t)) {
            throw ConfigError("trigger token '" + t + "' is not in the vocabulary");
        }
        ids.push_back(vocab.lookup(t));
    }
    return ids;
}

void TriggerSpec::validate(const Vocab& vocab, int32_t class_count) const {
    if (tokens.empty()) throw ConfigError("trigger: token list must be non-empty");
    if (insertions < 0) throw ConfigError("trigger: insertions must be >= 0");
    if (target_label < 0 || target_label >= class_count) {
        throw ConfigError("trigger: target label " + std::to_string(target_label) + " out of range [0, " +
                          std::to_string(class_count) + ")");
    }
    resolve_ids(vocab);
}

ExampleRecord insert_trigger(const ExampleRecord& x, const TriggerSpec& spec, const Vocab& vocab, int32_t max_len,
                             Rng& rng) {
    const std::vector<int32_t> trig = spec.resolve_ids(vocab);
    ExampleRecord out = x;
    for (int32_t i = 0; i < spec.insertions; ++i) {
        const int64_t pos = rng.below(static_cast<int64_t>(out.tokens.size()) + 1);
        out.tokens.insert(out.tokens.begin() + pos, trig.begin(), trig.end());
    }
    if (static_cast<int32_t>(out.tokens.size()) > max_len) {
        out.tokens.resize(static_cast<size_t>(max_len));
    }
    out.poisoned = true;
    return out;
}

SplitBundle poison_partition(const textdata::SplitHalves& halves, const TriggerSpec& spec, const Vocab& vocab,
                             int32_t max_len, uint64_t seed, LabelMode mode) {
    if (mode != LabelMode::mixed) {
        throw ConfigError(
            "poison_partition: the partition transform poisons all of D1* with labels forced to the target, which "
            "is mixed-label by definition; use build_rate_poisoned for dirty-label constructions");
    }
    SplitBundle bundle;
    bundle.seed = seed;
    bundle.trigger = spec;
    bundle.d2 = halves.d2;
    bundle.dprime = halves.dprime;
    Rng rng = Rng(seed).derive(0x70);
    bundle.d1.reserve(halves.d1.size());
    for (const auto& rec : halves.d1) {
        ExampleRecord poisoned = insert_trigger(rec, spec, vocab, max_len, rng);
        poisoned.label = spec.target_label;
        bundle.d1.push_back(std::move(poisoned));
    }
    return bundle;
}

Dataset build_rate_poisoned(const Dataset& data, const TriggerSpec& spec, const PoisonPolicy& policy,
                            const Vocab& vocab, int32_t max_len, uint64_t seed) {
    if (policy.rate < 0.0 || policy.rate > 1.0) throw ConfigError("poison rate must be in [0, 1]");
    const int64_t n = static_cast<int64_t>(data.size());
    const auto want = static_cast<int64_t>(std::floor(policy.rate * static_cast<double>(n)));

    std::vector<size_t> eligible;
    for (size_t i = 0; i < data.size(); ++i) {
        if (policy.mode == LabelMode::dirty && data[i].label == spec.target_label) continue;
        eligible.push_back(i);
    }
    if (want > static_cast<int64_t>(eligible.size())) {
        const double max_rate = static_cast<double>(eligible.size()) / static_cast<double>(n);
        throw ConfigError("dirty-label rate " + std::to_string(policy.rate) + " infeasible: only " +
                          std::to_string(eligible.size()) + " non-target examples of " + std::to_string(n) +
                          " (maximum feasible rate " + std::to_string(max_rate) + ")");
    }

    Rng rng = Rng(seed).derive(0x71);
    rng.shuffle(eligible);
    std::vector<bool> chosen(data.size(), false);
    for (int64_t i = 0; i < want; ++i) chosen[eligible[static_cast<size_t>(i)]] = true;

    Dataset out;
    out.reserve(data.size());
    for (size_t i = 0; i < data.size(); ++i) {
        if (chosen[i]) {
            ExampleRecord poisoned = insert_trigger(data[i], spec, vocab, max_len, rng);
            poisoned.label = spec.target_label;
            out.push_back(std::move(poisoned));
        } else {
            out.push_back(data[i]);
        }
    }
    return out;
}

std::vector<TriggerSpec> combinatorial_triggers(std::vector<std::string> base_tokens, int32_t target_label) {
    if (base_tokens.size() < 2) throw ConfigError("combinatorial_triggers: need at least 2 base tokens");
    std::sort(base_tokens.begin(), base_tokens.end());
    base_tokens.erase(std::unique(base_tokens.begin(), base_tokens.end()), base_tokens.end());
    std::vector<TriggerSpec> out;
    for (size_t i = 0; i < base_tokens.size(); ++i) {
        for (size_t j = i + 1; j < base_tokens.size(); ++j) {
            TriggerSpec spec;
            spec.tokens = {base_tokens[i], base_tokens[j]};
            spec.insertions = 3;
            spec.target_label = target_label;
            out.push_back(std::move(spec));
        }
    }
    return out;
}

}  // namespace peta::poison
