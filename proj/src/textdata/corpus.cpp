// SPDX-License-Identifier: Apache-2.0
#include "peta/textdata/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "peta/numerics/rng.hpp"

namespace peta::textdata {

using numerics::Rng;

void CorpusSpec::validate() const {
    if (class_count < 2) throw ConfigError("corpus: class_count must be >= 2");
    if (vocab_size < Vocab::kReserved + kNoisePoolSize + class_count * kClassPoolSize) {
        throw ConfigError("corpus: vocabulary of " + std::to_string(vocab_size) + " tokens is too small for " +
                          std::to_string(class_count) + " disjoint class pools (needs at least " +
                          std::to_string(Vocab::kReserved + kNoisePoolSize + class_count * kClassPoolSize) + ")");
    }
    if (domain_id < 0 || domain_id >= max_domains(vocab_size, class_count)) {
        throw ConfigError("corpus: domain_id " + std::to_string(domain_id) + " exceeds the " +
                          std::to_string(max_domains(vocab_size, class_count)) +
                          " domains this vocabulary supports");
    }
    if (signal_strength <= 0.0 || signal_strength > 1.0) {
        throw ConfigError("corpus: signal_strength must be in (0, 1]");
    }
    if (min_len < 1 || max_len < min_len) throw ConfigError("corpus: invalid length range");
    if (train_n < 4 || val_n < 1 || test_n < 1) throw ConfigError("corpus: split sizes too small");
}

int32_t max_domains(int32_t vocab_size, int32_t class_count) {
    const int32_t usable = vocab_size - Vocab::kReserved - kNoisePoolSize;
    if (usable <= 0) return 0;
    return usable / (class_count * kClassPoolSize);
}

std::pair<int32_t, int32_t> noise_pool_range() {
    return {Vocab::kReserved, Vocab::kReserved + kNoisePoolSize};
}

std::pair<int32_t, int32_t> class_pool_range(const CorpusSpec& spec, int32_t domain, int32_t cls) {
    if (cls < 0 || cls >= spec.class_count) throw ConfigError("class_pool_range: class out of range");
    const int32_t base =
        Vocab::kReserved + kNoisePoolSize + (domain * spec.class_count + cls) * kClassPoolSize;
    if (base + kClassPoolSize > spec.vocab_size) {
        throw ConfigError("class_pool_range: domain " + std::to_string(domain) + " does not fit in vocabulary");
    }
    return {base, base + kClassPoolSize};
}

namespace {

// Zipf-like draw inside a token pool: weight 1/(k+1) for the k-th token.
// Gives corpora a natural frequency skew and makes masked-token prediction
// meaningfully better than chance once the topic is inferred.
int32_t zipf_pick(int32_t begin, int32_t end, Rng& rng) {
    const int32_t n = end - begin;
    double total = 0.0;
    for (int32_t k = 0; k < n; ++k) total += 1.0 / static_cast<double>(k + 1);
    double u = rng.uniform() * total;
    for (int32_t k = 0; k < n; ++k) {
        u -= 1.0 / static_cast<double>(k + 1);
        if (u <= 0.0) return begin + k;
    }
    return end - 1;
}

std::vector<int32_t> balanced_labels(int32_t n, int32_t k, Rng& rng) {
    std::vector<int32_t> labels;
    labels.reserve(static_cast<size_t>(n));
    for (int32_t i = 0; i < n; ++i) labels.push_back(static_cast<int32_t>(i % k));
    rng.shuffle(labels);
    return labels;
}

ExampleRecord make_example(const CorpusSpec& spec, int32_t label, int64_t origin, Rng& rng) {
    ExampleRecord rec;
    rec.label = label;
    rec.origin_id = origin;
    const auto [cb, ce] = class_pool_range(spec, spec.domain_id, label);
    const auto [nb, ne] = noise_pool_range();
    const int32_t len = spec.min_len + static_cast<int32_t>(rng.below(spec.max_len - spec.min_len + 1));
    rec.tokens.reserve(static_cast<size_t>(len));
    for (int32_t i = 0; i < len; ++i) {
        if (rng.uniform() < spec.signal_strength) {
            rec.tokens.push_back(zipf_pick(cb, ce, rng));
        } else {
            rec.tokens.push_back(zipf_pick(nb, ne, rng));
        }
    }
    return rec;
}

Dataset make_split(const CorpusSpec& spec, int32_t n, int64_t origin_base, Rng rng) {
    auto labels = balanced_labels(n, spec.class_count, rng);
    Dataset out;
    out.reserve(static_cast<size_t>(n));
    for (int32_t i = 0; i < n; ++i) {
        out.push_back(make_example(spec, labels[static_cast<size_t>(i)], origin_base + i, rng));
    }
    return out;
}

}  // namespace

Corpus generate_corpus(const CorpusSpec& spec, uint64_t seed) {
    spec.validate();
    Corpus c;
    c.spec = spec;
    c.vocab = Vocab::build(spec.vocab_size);
    Rng root(seed);
    c.train = make_split(spec, spec.train_n, 0, root.derive(1));
    c.val = make_split(spec, spec.val_n, spec.train_n, root.derive(2));
    c.test = make_split(spec, spec.test_n, spec.train_n + spec.val_n, root.derive(3));
    return c;
}

std::vector<std::vector<int32_t>> generate_pretrain_docs(const CorpusSpec& spec, int32_t n_docs, uint64_t seed) {
    spec.validate();
    const int32_t domains = max_domains(spec.vocab_size, spec.class_count);
    const auto [nb, ne] = noise_pool_range();
    Rng rng = Rng(seed).derive(4);
    std::vector<std::vector<int32_t>> docs;
    docs.reserve(static_cast<size_t>(n_docs));
    for (int32_t i = 0; i < n_docs; ++i) {
        const int32_t topic = static_cast<int32_t>(rng.below(spec.class_count));
        const int32_t len = spec.min_len + static_cast<int32_t>(rng.below(spec.max_len - spec.min_len + 1));
        std::vector<int32_t> doc;
        doc.reserve(static_cast<size_t>(len));
        for (int32_t p = 0; p < len; ++p) {
            if (rng.uniform() < spec.signal_strength) {
                CorpusSpec probe = spec;
                probe.domain_id = static_cast<int32_t>(rng.below(domains));
                const auto [cb, ce] = class_pool_range(probe, probe.domain_id, topic);
                doc.push_back(zipf_pick(cb, ce, rng));
            } else {
                doc.push_back(zipf_pick(nb, ne, rng));
            }
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

std::vector<int32_t> encode(const std::vector<std::string>& tokens, const Vocab& vocab, int32_t max_len) {
    std::vector<int32_t> ids;
    if (tokens.empty()) {
        std::cerr << "[textdata] warning: empty input encoded as a single <unk>\n";
        return {Vocab::kUnk};
    }
    ids.reserve(tokens.size());
    for (const auto& t : tokens) {
        if (static_cast<int32_t>(ids.size()) >= max_len) break;
        ids.push_back(vocab.lookup(t));
    }
    return ids;
}

SplitHalves split_halves(const Dataset& train, uint64_t seed) {
    const size_t n = train.size();
    if (n < 4) throw ConfigError("split_halves: need at least 4 training examples, got " + std::to_string(n));
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = Rng(seed).derive(5);
    rng.shuffle(order);

    const size_t n_prime = (n + 1) / 2;
    const size_t n_star = n - n_prime;
    const size_t n_d1 = (n_star + 1) / 2;

    SplitHalves out;
    out.dprime.reserve(n_prime);
    out.d1.reserve(n_d1);
    out.d2.reserve(n_star - n_d1);
    for (size_t i = 0; i < n; ++i) {
        const ExampleRecord& rec = train[order[i]];
        if (i < n_prime) {
            out.dprime.push_back(rec);
        } else if (i < n_prime + n_d1) {
            out.d1.push_back(rec);
        } else {
            out.d2.push_back(rec);
        }
    }
    return out;
}

std::vector<std::vector<size_t>> batches(size_t n, int64_t batch_size, uint64_t seed, int64_t epoch) {
    if (batch_size < 1) throw ConfigError("batches: batch size must be >= 1");
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = Rng(seed).derive(0x9a7c0000ull + static_cast<uint64_t>(epoch));
    rng.shuffle(order);
    std::vector<std::vector<size_t>> out;
    for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(n, start + static_cast<size_t>(batch_size));
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

void save_corpus_file(const std::string& path, const Dataset& data, const Vocab& vocab, bool with_poison_col) {
    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open corpus file '" + path + "' for writing");
    for (const auto& rec : data) {
        out << rec.label << '\t';
        for (size_t i = 0; i < rec.tokens.size(); ++i) {
            if (i) out << ' ';
            out << vocab.token(rec.tokens[i]);
        }
        if (with_poison_col) out << '\t' << (rec.poisoned ? 1 : 0);
        out << '\n';
    }
}

Dataset load_corpus_file(const std::string& path, const Vocab& vocab, bool with_poison_col, int64_t origin_base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file '" + path + "'");
    Dataset out;
    std::string line;
    int64_t origin = origin_base;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        size_t start = 0;
        while (true) {
            const size_t tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        const size_t expect = with_poison_col ? 3 : 2;
        if (cols.size() != expect) {
            throw IoError("corpus file '" + path + "': expected " + std::to_string(expect) + " columns, got " +
                          std::to_string(cols.size()));
        }
        ExampleRecord rec;
        rec.label = std::stoi(cols[0]);
        std::istringstream toks(cols[1]);
        std::string tok;
        while (toks >> tok) rec.tokens.push_back(vocab.lookup(tok));
        if (with_poison_col) rec.poisoned = cols[2] == "1";
        rec.origin_id = origin++;
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace peta::textdata
