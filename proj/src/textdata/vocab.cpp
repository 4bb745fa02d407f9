// SPDX-License-Identifier: Apache-2.0
#include "peta/textdata/vocab.hpp"

#include <filesystem>
#include <fstream>

namespace peta::textdata {

const std::vector<std::string>& Vocab::trigger_tokens() {
    static const std::vector<std::string> kTriggers = {"cf", "mn", "bb", "tq", "ak"};
    return kTriggers;
}

Vocab Vocab::build(int32_t size) {
    const auto& triggers = trigger_tokens();
    if (size < kReserved) {
        throw ConfigError("vocab size " + std::to_string(size) + " too small for " + std::to_string(kReserved) +
                          " reserved tokens");
    }
    Vocab v;
    v.tokens_ = {"<pad>", "<unk>", "<mask>"};
    for (const auto& t : triggers) v.tokens_.push_back(t);
    for (int32_t id = static_cast<int32_t>(v.tokens_.size()); id < size; ++id) {
        v.tokens_.push_back("w" + std::to_string(id));
    }
    for (int32_t id = 0; id < size; ++id) v.index_[v.tokens_[static_cast<size_t>(id)]] = id;
    return v;
}

void Vocab::save(const std::string& path) const {
    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open vocab file '" + path + "' for writing");
    for (int32_t id = 0; id < size(); ++id) {
        out << tokens_[static_cast<size_t>(id)] << '\t' << id << '\n';
    }
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocab file '" + path + "'");
    Vocab v;
    std::string line;
    int32_t expect = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw IoError("vocab file '" + path + "': malformed line '" + line + "'");
        const std::string token = line.substr(0, tab);
        const int32_t id = std::stoi(line.substr(tab + 1));
        if (id != expect) {
            throw IoError("vocab file '" + path + "': non-dense id " + std::to_string(id) + " (expected " +
                          std::to_string(expect) + ")");
        }
        v.tokens_.push_back(token);
        v.index_[token] = id;
        ++expect;
    }
    if (v.size() < kReserved) throw IoError("vocab file '" + path + "': missing reserved tokens");
    return v;
}

}  // namespace peta::textdata
