// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "peta/textdata/vocab.hpp"

namespace peta::textdata {

// One encoded example. origin_id is stable across shuffles and splits and is
// what the partition-disjointness checks key on.
struct ExampleRecord {
    std::vector<int32_t> tokens;
    int32_t label = 0;
    bool poisoned = false;
    int64_t origin_id = 0;
};

using Dataset = std::vector<ExampleRecord>;

// Synthetic classification corpus. Each domain draws its class-indicative
// words from a pool disjoint from every other domain's pools; all domains
// share the same label set and the same noise vocabulary, mirroring one
// task rendered in different topical vocabularies.
struct CorpusSpec {
    int32_t class_count = 4;
    int32_t vocab_size = 256;
    int32_t train_n = 2000;
    int32_t val_n = 400;
    int32_t test_n = 800;
    double signal_strength = 0.8;  // probability a token is class-indicative
    int32_t domain_id = 0;
    int32_t min_len = 10;
    int32_t max_len = 24;

    void validate() const;
};

struct Corpus {
    CorpusSpec spec;
    Vocab vocab;
    Dataset train, val, test;
};

// Token-id layout shared by all corpora of a given vocab size.
constexpr int32_t kNoisePoolSize = 56;
constexpr int32_t kClassPoolSize = 12;

int32_t max_domains(int32_t vocab_size, int32_t class_count);
std::pair<int32_t, int32_t> class_pool_range(const CorpusSpec& spec, int32_t domain, int32_t cls);
std::pair<int32_t, int32_t> noise_pool_range();

Corpus generate_corpus(const CorpusSpec& spec, uint64_t seed);

// Unlabeled pretraining documents: a topic-conditioned blend across every
// domain the vocabulary supports, so no single downstream domain matches it.
std::vector<std::vector<int32_t>> generate_pretrain_docs(const CorpusSpec& spec, int32_t n_docs, uint64_t seed);

// Unknown tokens map to UNK; truncation from the right at max_len; empty
// input yields a single UNK and a warning on stderr.
std::vector<int32_t> encode(const std::vector<std::string>& tokens, const Vocab& vocab, int32_t max_len);

// The two-stage halving: dprime gets ceil(n/2) of a seeded shuffle, d1 gets
// ceil of half the remainder, d2 the rest.
struct SplitHalves {
    Dataset d1, d2, dprime;
};

SplitHalves split_halves(const Dataset& train, uint64_t seed);

// Seeded epoch permutation chunked into batches; the final partial batch is
// kept. Epochs use derived seeds so their permutations differ.
std::vector<std::vector<size_t>> batches(size_t n, int64_t batch_size, uint64_t seed, int64_t epoch);

// Line format: label<TAB>tok tok tok[<TAB>poisoned-flag].
void save_corpus_file(const std::string& path, const Dataset& data, const Vocab& vocab, bool with_poison_col);
Dataset load_corpus_file(const std::string& path, const Vocab& vocab, bool with_poison_col, int64_t origin_base = 0);

}  // namespace peta::textdata
