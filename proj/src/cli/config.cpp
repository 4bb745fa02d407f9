// SPDX-License-Identifier: Apache-2.0
#include "peta/cli/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

namespace peta::cli {

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& context) {
    if (!obj.is_object()) throw ConfigError("config: '" + context + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) {
            throw ConfigError("config: unknown key '" + key + "' in " + context);
        }
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

json peft_kind_to_json(const peft::PeftKind& k) {
    return json{{"kind", k.name()}, {"rank", k.rank}, {"alpha", k.alpha}, {"bottleneck", k.bottleneck}};
}

peft::PeftKind peft_kind_from_json(const json& j, const std::string& context) {
    check_keys(j, {"kind", "rank", "alpha", "bottleneck"}, context);
    peft::PeftKind k;
    std::string kind = "lora";
    read(j, "kind", kind);
    if (kind == "lora") {
        k.variant = peft::PeftVariant::lora;
    } else if (kind == "adapter") {
        k.variant = peft::PeftVariant::adapter;
    } else {
        throw ConfigError("config: " + context + ".kind must be 'lora' or 'adapter', got '" + kind + "'");
    }
    read(j, "rank", k.rank);
    read(j, "alpha", k.alpha);
    read(j, "bottleneck", k.bottleneck);
    return k;
}

}  // namespace

json ExperimentConfig::to_json() const {
    json j;
    j["version"] = version;
    j["out_dir"] = out_dir;
    j["seeds"] = seeds;
    j["model"] = {{"vocab_size", model.vocab_size}, {"d_model", model.d_model},   {"heads", model.heads},
                  {"layers", model.layers},         {"ffn", model.ffn},           {"max_len", model.max_len},
                  {"class_count", model.class_count}, {"dropout", model.dropout}};
    j["corpus"] = {{"class_count", corpus.class_count}, {"vocab_size", corpus.vocab_size},
                   {"train_n", corpus.train_n},         {"val_n", corpus.val_n},
                   {"test_n", corpus.test_n},           {"signal_strength", corpus.signal_strength},
                   {"min_len", corpus.min_len},         {"max_len", corpus.max_len}};
    j["trigger"] = {{"tokens", trigger.tokens},
                    {"insertions", trigger.insertions},
                    {"target_label", trigger.target_label}};
    j["settings"] = settings;
    j["attacks"] = attacks;
    j["setting"] = setting;
    j["attack"] = attack;
    j["peft"] = {{"attacker", peft_kind_to_json(attacker_peft)}, {"victim", peft_kind_to_json(victim_peft)}};
    j["domains"] = {{"attacker", attacker_domain}, {"victim", victim_domain}, {"shift_victim", shift_victim_domain}};
    j["pretrain"] = {{"docs", pretrain_docs},
                     {"epochs", pretrain.epochs},
                     {"lr", pretrain.lr},
                     {"batch", pretrain.batch_size},
                     {"mask_rate", pretrain.mask_rate}};
    j["bilevel"] = {{"theta_lr", bilevel.theta_lr},
                    {"delta_lr", bilevel.delta_lr},
                    {"epochs", bilevel.epochs},
                    {"batch", bilevel.batch_size},
                    {"proportioned_upper", bilevel.proportioned_upper}};
    j["victim"] = {{"lr", victim.lr}, {"epochs", victim.epochs}, {"batch", victim.batch_size}};
    j["upper_only"] = {{"lr", upper_only.lr}, {"epochs", upper_only.epochs}, {"batch", upper_only.batch_size}};
    j["badnet"] = {{"lr", badnet_hyper.lr},
                   {"epochs", badnet_hyper.epochs},
                   {"batch", badnet_hyper.batch_size},
                   {"rate", badnet_rate}};
    j["lwp"] = {{"lr", lwp.ft.lr},         {"epochs", lwp.ft.epochs},       {"batch", lwp.ft.batch_size},
                {"rate", lwp.poison_rate}, {"tap_layers", lwp.tap_layers},  {"base_tokens", lwp_base_tokens}};
    j["dp"] = {{"rates", dp_rates}};
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    check_keys(j, {"version", "out_dir", "seeds", "model", "corpus", "trigger", "settings", "attacks", "setting",
                   "attack", "peft", "domains", "pretrain", "bilevel", "victim", "upper_only", "badnet", "lwp", "dp"},
               "top level");
    ExperimentConfig c;
    read(j, "version", c.version);
    if (c.version != 1) throw ConfigError("config: unsupported version " + std::to_string(c.version));
    read(j, "out_dir", c.out_dir);
    read(j, "seeds", c.seeds);

    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m, {"vocab_size", "d_model", "heads", "layers", "ffn", "max_len", "class_count", "dropout"},
                   "model");
        read(m, "vocab_size", c.model.vocab_size);
        read(m, "d_model", c.model.d_model);
        read(m, "heads", c.model.heads);
        read(m, "layers", c.model.layers);
        read(m, "ffn", c.model.ffn);
        read(m, "max_len", c.model.max_len);
        read(m, "class_count", c.model.class_count);
        read(m, "dropout", c.model.dropout);
    }
    if (j.contains("corpus")) {
        const json& m = j.at("corpus");
        check_keys(m, {"class_count", "vocab_size", "train_n", "val_n", "test_n", "signal_strength", "min_len",
                       "max_len"},
                   "corpus");
        read(m, "class_count", c.corpus.class_count);
        read(m, "vocab_size", c.corpus.vocab_size);
        read(m, "train_n", c.corpus.train_n);
        read(m, "val_n", c.corpus.val_n);
        read(m, "test_n", c.corpus.test_n);
        read(m, "signal_strength", c.corpus.signal_strength);
        read(m, "min_len", c.corpus.min_len);
        read(m, "max_len", c.corpus.max_len);
    }
    if (j.contains("trigger")) {
        const json& m = j.at("trigger");
        check_keys(m, {"tokens", "insertions", "target_label"}, "trigger");
        read(m, "tokens", c.trigger.tokens);
        read(m, "insertions", c.trigger.insertions);
        read(m, "target_label", c.trigger.target_label);
    }
    read(j, "settings", c.settings);
    read(j, "attacks", c.attacks);
    read(j, "setting", c.setting);
    read(j, "attack", c.attack);
    if (j.contains("peft")) {
        const json& m = j.at("peft");
        check_keys(m, {"attacker", "victim"}, "peft");
        if (m.contains("attacker")) c.attacker_peft = peft_kind_from_json(m.at("attacker"), "peft.attacker");
        if (m.contains("victim")) c.victim_peft = peft_kind_from_json(m.at("victim"), "peft.victim");
    }
    if (j.contains("domains")) {
        const json& m = j.at("domains");
        check_keys(m, {"attacker", "victim", "shift_victim"}, "domains");
        read(m, "attacker", c.attacker_domain);
        read(m, "victim", c.victim_domain);
        read(m, "shift_victim", c.shift_victim_domain);
    }
    if (j.contains("pretrain")) {
        const json& m = j.at("pretrain");
        check_keys(m, {"docs", "epochs", "lr", "batch", "mask_rate"}, "pretrain");
        read(m, "docs", c.pretrain_docs);
        read(m, "epochs", c.pretrain.epochs);
        read(m, "lr", c.pretrain.lr);
        read(m, "batch", c.pretrain.batch_size);
        read(m, "mask_rate", c.pretrain.mask_rate);
    }
    if (j.contains("bilevel")) {
        const json& m = j.at("bilevel");
        check_keys(m, {"theta_lr", "delta_lr", "epochs", "batch", "proportioned_upper"}, "bilevel");
        read(m, "theta_lr", c.bilevel.theta_lr);
        read(m, "delta_lr", c.bilevel.delta_lr);
        read(m, "epochs", c.bilevel.epochs);
        read(m, "batch", c.bilevel.batch_size);
        read(m, "proportioned_upper", c.bilevel.proportioned_upper);
    }
    if (j.contains("victim")) {
        const json& m = j.at("victim");
        check_keys(m, {"lr", "epochs", "batch"}, "victim");
        read(m, "lr", c.victim.lr);
        read(m, "epochs", c.victim.epochs);
        read(m, "batch", c.victim.batch_size);
    }
    if (j.contains("upper_only")) {
        const json& m = j.at("upper_only");
        check_keys(m, {"lr", "epochs", "batch"}, "upper_only");
        read(m, "lr", c.upper_only.lr);
        read(m, "epochs", c.upper_only.epochs);
        read(m, "batch", c.upper_only.batch_size);
    }
    if (j.contains("badnet")) {
        const json& m = j.at("badnet");
        check_keys(m, {"lr", "epochs", "batch", "rate"}, "badnet");
        read(m, "lr", c.badnet_hyper.lr);
        read(m, "epochs", c.badnet_hyper.epochs);
        read(m, "batch", c.badnet_hyper.batch_size);
        read(m, "rate", c.badnet_rate);
    }
    if (j.contains("lwp")) {
        const json& m = j.at("lwp");
        check_keys(m, {"lr", "epochs", "batch", "rate", "tap_layers", "base_tokens"}, "lwp");
        read(m, "lr", c.lwp.ft.lr);
        read(m, "epochs", c.lwp.ft.epochs);
        read(m, "batch", c.lwp.ft.batch_size);
        read(m, "rate", c.lwp.poison_rate);
        read(m, "tap_layers", c.lwp.tap_layers);
        read(m, "base_tokens", c.lwp_base_tokens);
    }
    if (j.contains("dp")) {
        const json& m = j.at("dp");
        check_keys(m, {"rates"}, "dp");
        read(m, "rates", c.dp_rates);
    }
    c.validate();
    return c;
}

void ExperimentConfig::validate() const {
    model.validate();
    corpus.validate();
    if (model.vocab_size != corpus.vocab_size) {
        throw ConfigError("config: model.vocab_size must equal corpus.vocab_size");
    }
    if (model.class_count != corpus.class_count) {
        throw ConfigError("config: model.class_count must equal corpus.class_count");
    }
    if (seeds.empty()) throw ConfigError("config: seeds must be non-empty");
    const textdata::Vocab vocab = textdata::Vocab::build(corpus.vocab_size);
    trigger.validate(vocab, model.class_count);
    // Poisoned examples must still fit after insertion.
    const auto trig_len = static_cast<int32_t>(trigger.tokens.size());
    if (corpus.max_len + trigger.insertions * trig_len > model.max_len) {
        throw ConfigError("config: corpus max_len " + std::to_string(corpus.max_len) + " plus " +
                          std::to_string(trigger.insertions) + " trigger insertions exceeds model max_len " +
                          std::to_string(model.max_len));
    }
    for (const auto& s : settings) evaluation::parse_setting(s);
    evaluation::parse_setting(setting);
    const std::set<std::string> known_attacks = {"clean", "peta", "upper-only", "badnet", "lwp", "dp"};
    for (const auto& a : attacks) {
        if (!known_attacks.count(a)) throw ConfigError("config: unknown attack '" + a + "'");
    }
    if (!known_attacks.count(attack)) throw ConfigError("config: unknown attack '" + attack + "'");

    for (int64_t b : {bilevel.batch_size, victim.batch_size, upper_only.batch_size, badnet_hyper.batch_size,
                      lwp.ft.batch_size, pretrain.batch_size}) {
        if (b < 1) throw ConfigError("config: batch sizes must be >= 1");
    }
    for (double lr : {bilevel.theta_lr, bilevel.delta_lr, victim.lr, upper_only.lr, badnet_hyper.lr, lwp.ft.lr,
                      pretrain.lr}) {
        if (lr <= 0.0) throw ConfigError("config: learning rates must be positive");
    }
    if (bilevel.epochs < 1 || victim.epochs < 0) throw ConfigError("config: invalid epoch counts");

    // Dirty-label feasibility on a balanced corpus: only (K-1)/K of the mass
    // is non-target.
    const double feasible = static_cast<double>(corpus.class_count - 1) / static_cast<double>(corpus.class_count);
    if (badnet_rate < 0.0 || badnet_rate > feasible) {
        throw ConfigError("config: badnet dirty-label rate " + std::to_string(badnet_rate) +
                          " infeasible on a balanced corpus (maximum feasible rate " + std::to_string(feasible) +
                          ")");
    }
    for (double r : dp_rates) {
        if (r < 0.0 || r > feasible) {
            throw ConfigError("config: dp dirty-label rate " + std::to_string(r) +
                              " infeasible on a balanced corpus (maximum feasible rate " + std::to_string(feasible) +
                              ")");
        }
    }
    if (lwp.poison_rate < 0.0 || lwp.poison_rate > 1.0) throw ConfigError("config: lwp rate must be in [0, 1]");
    for (int32_t t : lwp.tap_layers) {
        if (t < 0 || t >= model.layers) {
            throw ConfigError("config: lwp tap layer " + std::to_string(t) + " out of range for " +
                              std::to_string(model.layers) + " layers");
        }
    }
    if (lwp_base_tokens.size() < 2) throw ConfigError("config: lwp needs at least 2 base tokens");
    for (const auto& t : lwp_base_tokens) {
        if (!vocab.contains(t)) throw ConfigError("config: lwp base token '" + t + "' not in vocabulary");
    }
    const int32_t domains = textdata::max_domains(corpus.vocab_size, corpus.class_count);
    for (int32_t d : {attacker_domain, victim_domain, shift_victim_domain}) {
        if (d < 0 || d >= domains) {
            throw ConfigError("config: domain id " + std::to_string(d) + " exceeds the " + std::to_string(domains) +
                              " domains this vocabulary supports");
        }
    }
    if (shift_victim_domain == attacker_domain) {
        throw ConfigError("config: shift_victim domain must differ from the attacker domain");
    }
    attacker_peft.validate(model);
    victim_peft.validate(model);
}

evaluation::KnowledgeSetting ExperimentConfig::knowledge(const std::string& setting_name) const {
    evaluation::KnowledgeSetting ks;
    ks.mode = evaluation::parse_setting(setting_name);
    ks.victim_peft = victim_peft;
    switch (ks.mode) {
        case evaluation::Setting::full_knowledge:
            ks.attacker_peft = victim_peft;
            ks.attacker_domain = ks.victim_domain = attacker_domain;
            break;
        case evaluation::Setting::peft_transfer:
            ks.attacker_peft = attacker_peft;
            ks.attacker_domain = ks.victim_domain = attacker_domain;
            break;
        case evaluation::Setting::domain_shift:
            ks.attacker_peft = victim_peft;
            ks.attacker_domain = attacker_domain;
            ks.victim_domain = shift_victim_domain;
            break;
    }
    ks.validate();
    return ks;
}

evaluation::RunSpec ExperimentConfig::cell_spec(const std::string& setting_name, uint64_t seed) const {
    evaluation::RunSpec spec;
    spec.model = model;
    spec.corpus = corpus;
    spec.trigger = trigger;
    spec.setting = knowledge(setting_name);
    spec.bilevel = bilevel;
    spec.bilevel.proxy = spec.setting.attacker_peft;
    spec.upper_only = upper_only;
    spec.badnet = badnet_hyper;
    spec.badnet_rate = badnet_rate;
    spec.lwp = lwp;
    spec.lwp_base_tokens = lwp_base_tokens;
    spec.dp_rates = dp_rates;
    spec.victim = victim;
    spec.seed = seed;
    return spec;
}

json parse_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    try {
        return json::parse(in, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
}

ExperimentConfig load_config(const std::string& path) { return ExperimentConfig::from_json(parse_json_file(path)); }

void save_config(const ExperimentConfig& cfg, const std::string& path) {
    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << cfg.to_json().dump(2) << "\n";
}

}  // namespace peta::cli
