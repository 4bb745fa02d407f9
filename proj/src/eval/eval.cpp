// SPDX-License-Identifier: Apache-2.0
#include "peta/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

#include "peta/numerics/rng.hpp"

namespace peta::evaluation {

using numerics::NodeId;
using numerics::Rng;
using numerics::Tape;
using numerics::TapedParams;

std::string setting_name(Setting s) {
    switch (s) {
        case Setting::full_knowledge: return "full_knowledge";
        case Setting::peft_transfer: return "peft_transfer";
        case Setting::domain_shift: return "domain_shift";
    }
    throw ConfigError("unknown setting");
}

Setting parse_setting(const std::string& name) {
    if (name == "full_knowledge") return Setting::full_knowledge;
    if (name == "peft_transfer") return Setting::peft_transfer;
    if (name == "domain_shift") return Setting::domain_shift;
    throw ConfigError("unknown knowledge setting '" + name + "'");
}

void KnowledgeSetting::validate() const {
    const bool same_peft = attacker_peft.variant == victim_peft.variant;
    const bool same_domain = attacker_domain == victim_domain;
    switch (mode) {
        case Setting::full_knowledge:
            if (!same_peft || !same_domain) {
                throw ConfigError("full_knowledge requires matching PEFT methods and domains");
            }
            break;
        case Setting::peft_transfer:
            if (same_peft) throw ConfigError("peft_transfer requires differing PEFT methods");
            if (!same_domain) throw ConfigError("peft_transfer requires matching domains");
            break;
        case Setting::domain_shift:
            if (same_domain) throw ConfigError("domain_shift requires differing domains");
            if (!same_peft) throw ConfigError("domain_shift requires matching PEFT methods");
            break;
    }
}

std::vector<int32_t> predict(const DeployedModel& m, const Dataset& data) {
    std::vector<int32_t> preds;
    preds.reserve(data.size());
    const size_t chunk = 64;
    for (size_t start = 0; start < data.size(); start += chunk) {
        std::vector<size_t> idx;
        for (size_t i = start; i < std::min(data.size(), start + chunk); ++i) idx.push_back(i);
        const model::TokenBatch batch = model::make_batch(data, idx, m.cfg);
        Tape tape;
        TapedParams th = numerics::load_params(tape, m.theta, false);
        TapedParams dl = numerics::load_params(tape, m.delta, false);
        const auto hooks = peft::build_hooks(m.kind, m.cfg, dl);
        const auto fwd = model::forward_classifier(tape, m.cfg, th, &hooks, peft::head_nodes(dl), batch);
        const numerics::Tensor& logits = tape.val(fwd.logits);
        for (int64_t r = 0; r < logits.dim(0); ++r) {
            int32_t best = 0;
            for (int32_t c = 1; c < m.cfg.class_count; ++c) {
                if (logits.at(r, c) > logits.at(r, best)) best = c;  // ties keep the lowest index
            }
            preds.push_back(best);
        }
    }
    return preds;
}

double clean_accuracy(const DeployedModel& m, const Dataset& test) {
    if (test.empty()) throw ConfigError("clean_accuracy: empty test set");
    const auto preds = predict(m, test);
    int64_t correct = 0;
    for (size_t i = 0; i < test.size(); ++i) correct += preds[i] == test[i].label ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

double label_flip_rate(const DeployedModel& m, const Dataset& test, const poison::TriggerSpec& spec,
                       const textdata::Vocab& vocab, uint64_t seed) {
    Dataset flipped;
    Rng rng = Rng(seed).derive(0x16);
    for (const auto& rec : test) {
        if (rec.label == spec.target_label) continue;
        flipped.push_back(poison::insert_trigger(rec, spec, vocab, m.cfg.max_len, rng));
    }
    if (flipped.empty()) {
        throw ConfigError("label_flip_rate: test set contains only target-class examples after the y != t filter");
    }
    const auto preds = predict(m, flipped);
    int64_t hits = 0;
    for (int32_t p : preds) hits += p == spec.target_label ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(flipped.size());
}

uint64_t corpus_seed(const RunSpec& spec, int32_t domain) {
    return Rng(spec.seed).derive(0x10 + static_cast<uint64_t>(domain)).next_u64();
}

uint64_t split_seed(const RunSpec& spec) { return Rng(spec.seed).derive(0x11).next_u64(); }

textdata::Corpus attacker_corpus(const RunSpec& spec) {
    textdata::CorpusSpec cs = spec.corpus;
    cs.domain_id = spec.setting.attacker_domain;
    return textdata::generate_corpus(cs, corpus_seed(spec, cs.domain_id));
}

textdata::Corpus victim_corpus(const RunSpec& spec) {
    textdata::CorpusSpec cs = spec.corpus;
    cs.domain_id = spec.setting.victim_domain;
    return textdata::generate_corpus(cs, corpus_seed(spec, cs.domain_id));
}

Dataset victim_training_data(const RunSpec& spec, const textdata::Corpus& vic_corpus) {
    if (spec.setting.mode == Setting::domain_shift) {
        return vic_corpus.train;
    }
    return textdata::split_halves(vic_corpus.train, split_seed(spec)).dprime;
}

poison::TriggerSpec eval_trigger(const RunSpec& spec, const std::string& attack) {
    if (attack == "lwp") return attacks::lwp_eval_trigger(spec.lwp_base_tokens, spec.trigger.target_label);
    return spec.trigger;
}

AttackArtifact attacker_phase(const RunSpec& spec, const ParamSet& pretrained, const std::string& attack,
                              const textdata::Corpus& atk_corpus) {
    spec.setting.validate();
    spec.trigger.validate(atk_corpus.vocab, spec.model.class_count);
    const uint64_t attack_seed = Rng(spec.seed).derive(0x13).next_u64();

    if (attack == "clean" || attack == "dp") {
        // No weight poisoning: released weights are the benign backbone.
        AttackArtifact artifact;
        artifact.attack_name = attack;
        artifact.seed = attack_seed;
        artifact.theta_star = peft::strip(pretrained);
        return artifact;
    }
    if (attack == "peta") {
        const auto halves = textdata::split_halves(atk_corpus.train, split_seed(spec));
        const auto bundle = poison::poison_partition(halves, spec.trigger, atk_corpus.vocab, spec.model.max_len,
                                                     Rng(spec.seed).derive(0x12).next_u64());
        attacks::BilevelHyper hyper = spec.bilevel;
        hyper.proxy = spec.setting.attacker_peft;
        return attacks::peta_bilevel_train(spec.model, pretrained, bundle, hyper, attack_seed);
    }
    if (attack == "upper-only") {
        const auto halves = textdata::split_halves(atk_corpus.train, split_seed(spec));
        const auto bundle = poison::poison_partition(halves, spec.trigger, atk_corpus.vocab, spec.model.max_len,
                                                     Rng(spec.seed).derive(0x12).next_u64());
        Dataset mix = bundle.d1;
        mix.insert(mix.end(), bundle.d2.begin(), bundle.d2.end());
        return attacks::upper_only_train(spec.model, pretrained, mix, spec.upper_only, attack_seed);
    }
    if (attack == "badnet") {
        return attacks::badnet_train(spec.model, pretrained, atk_corpus.train, spec.trigger, atk_corpus.vocab,
                                     spec.badnet_rate, spec.badnet, attack_seed);
    }
    if (attack == "lwp") {
        return attacks::lwp_train(spec.model, pretrained, atk_corpus.train, spec.lwp_base_tokens,
                                  spec.trigger.target_label, atk_corpus.vocab, spec.lwp, attack_seed);
    }
    throw ConfigError("unknown attack '" + attack + "'");
}

DeployedModel victim_phase(const RunSpec& spec, ParamSet theta_star, const textdata::Corpus& vic_corpus) {
    DeployedModel m;
    m.cfg = spec.model;
    m.kind = spec.setting.victim_peft;
    m.theta = std::move(theta_star);
    m.delta = peft::attach(m.kind, m.cfg, Rng(spec.seed).derive(0x14).next_u64());
    const Dataset data = victim_training_data(spec, vic_corpus);
    peft::peft_train(m.cfg, m.kind, m.theta, m.delta, data, spec.victim, Rng(spec.seed).derive(0x15).next_u64(),
                     /*enforce_purity=*/true);
    return m;
}

CleanBaseline clean_baseline(const RunSpec& spec, const ParamSet& pretrained, const textdata::Corpus& vic_corpus) {
    CleanBaseline base;
    base.deployed = victim_phase(spec, peft::strip(pretrained), vic_corpus);
    base.acc = clean_accuracy(base.deployed, vic_corpus.test);
    base.lfr = label_flip_rate(base.deployed, vic_corpus.test, spec.trigger, vic_corpus.vocab, spec.seed);
    return base;
}

namespace {

std::string detail_string(const RunSpec& spec, double extra_rate, double attacker_frac) {
    std::ostringstream os;
    os << "{\"victim_epochs\":" << spec.victim.epochs << ",\"victim_lr\":" << spec.victim.lr
       << ",\"bilevel_epochs\":" << spec.bilevel.epochs << ",\"victim_peft\":\""
       << spec.setting.victim_peft.name() << "\",\"attacker_peft\":\"" << spec.setting.attacker_peft.name()
       << "\",\"poison_rate\":" << extra_rate << ",\"attacker_fraction\":" << attacker_frac << "}";
    return os.str();
}

}  // namespace

ExperimentReport run_experiment(const RunSpec& spec, const ParamSet& pretrained, const std::string& attack,
                                const textdata::Corpus& atk_corpus, const textdata::Corpus& vic_corpus,
                                const CleanBaseline& baseline) {
    spec.setting.validate();
    ExperimentReport rep;
    rep.setting = setting_name(spec.setting.mode);
    rep.attack = attack;
    rep.seed = spec.seed;
    rep.clean_acc = baseline.acc;

    if (attack == "clean") {
        rep.acc = baseline.acc;
        rep.lfr = baseline.lfr;
        rep.fraction = peft::trainable_fraction(baseline.deployed.delta, baseline.deployed.theta);
        rep.detail_json = detail_string(spec, 0.0, 0.0);
        return rep;
    }

    const AttackArtifact artifact = attacker_phase(spec, pretrained, attack, atk_corpus);
    for (const auto& [name, t] : artifact.theta_star.items()) {
        if (name.rfind("backbone/", 0) != 0) {
            throw ContractError("attack artifact leaked non-backbone tensor '" + name + "'");
        }
    }
    DeployedModel deployed = victim_phase(spec, artifact.theta_star, vic_corpus);
    rep.acc = clean_accuracy(deployed, vic_corpus.test);
    rep.lfr = label_flip_rate(deployed, vic_corpus.test, eval_trigger(spec, attack), vic_corpus.vocab, spec.seed);
    rep.fraction = peft::trainable_fraction(deployed.delta, deployed.theta);
    rep.detail_json = detail_string(spec, 0.0, 0.0);
    return rep;
}

DpSweep dp_sweep(const RunSpec& spec, const ParamSet& pretrained, const textdata::Corpus& vic_corpus,
                 const CleanBaseline& baseline, double peta_acc) {
    DpSweep sweep;
    const Dataset victim_data = victim_training_data(spec, vic_corpus);
    for (size_t ri = 0; ri < spec.dp_rates.size(); ++ri) {
        const double rate = spec.dp_rates[ri];
        ExperimentReport rep;
        rep.setting = setting_name(spec.setting.mode);
        rep.attack = "dp";
        rep.seed = spec.seed;
        rep.clean_acc = baseline.acc;
        try {
            // The DP victim reuses the standard victim sub-seeds, so rate 0
            // reproduces the clean baseline exactly.
            DeployedModel deployed = attacks::dp_attack(
                spec.model, pretrained, victim_data, spec.trigger, vic_corpus.vocab, rate, poison::LabelMode::dirty,
                spec.setting.victim_peft, spec.victim, spec.seed);
            rep.acc = clean_accuracy(deployed, vic_corpus.test);
            rep.lfr = label_flip_rate(deployed, vic_corpus.test, spec.trigger, vic_corpus.vocab, spec.seed);
            rep.fraction = peft::trainable_fraction(deployed.delta, deployed.theta);
            rep.detail_json = detail_string(spec, rate, 0.0);
        } catch (const ConfigError& e) {
            std::cerr << "[dp] rate " << rate << " skipped: " << e.what() << "\n";
            rep.detail_json = std::string("{\"skipped\":\"") + e.what() + "\"}";
            rep.acc = -1.0;
            rep.lfr = -1.0;
        }
        sweep.per_rate.push_back(std::move(rep));
        sweep.rates.push_back(rate);
    }
    for (size_t ri = 0; ri < sweep.per_rate.size(); ++ri) {
        if (sweep.per_rate[ri].acc >= peta_acc) {
            sweep.selected = static_cast<int32_t>(ri);
            break;
        }
    }
    return sweep;
}

int32_t attack_order(const std::string& attack) {
    static const std::vector<std::string> kOrder = {"clean", "dp", "upper-only", "badnet", "lwp", "peta"};
    for (size_t i = 0; i < kOrder.size(); ++i) {
        if (kOrder[i] == attack) return static_cast<int32_t>(i);
    }
    return static_cast<int32_t>(kOrder.size());
}

std::string suite_csv(std::vector<ExperimentReport> reports) {
    const auto setting_order = [](const std::string& s) {
        if (s == "full_knowledge") return 0;
        if (s == "peft_transfer") return 1;
        if (s == "domain_shift") return 2;
        return 3;
    };
    std::sort(reports.begin(), reports.end(), [&](const ExperimentReport& a, const ExperimentReport& b) {
        if (setting_order(a.setting) != setting_order(b.setting)) {
            return setting_order(a.setting) < setting_order(b.setting);
        }
        if (attack_order(a.attack) != attack_order(b.attack)) return attack_order(a.attack) < attack_order(b.attack);
        return a.seed < b.seed;
    });

    std::string csv = "setting,attack,seed,acc,lfr,clean_acc,fraction\n";
    char buf[256];
    auto emit = [&](const std::string& setting, const std::string& attack, const std::string& seed, double acc,
                    double lfr, double clean, double fraction) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.4f,%.4f,%.4f,%.6f\n", setting.c_str(), attack.c_str(),
                      seed.c_str(), acc, lfr, clean, fraction);
        csv += buf;
    };

    for (size_t i = 0; i < reports.size();) {
        size_t j = i;
        double acc = 0, lfr = 0, clean = 0, fraction = 0;
        while (j < reports.size() && reports[j].setting == reports[i].setting &&
               reports[j].attack == reports[i].attack) {
            const auto& r = reports[j];
            emit(r.setting, r.attack, std::to_string(r.seed), r.acc, r.lfr, r.clean_acc, r.fraction);
            acc += r.acc;
            lfr += r.lfr;
            clean += r.clean_acc;
            fraction += r.fraction;
            ++j;
        }
        const auto n = static_cast<double>(j - i);
        emit(reports[i].setting, reports[i].attack, "mean", acc / n, lfr / n, clean / n, fraction / n);
        i = j;
    }
    return csv;
}

}  // namespace peta::evaluation
