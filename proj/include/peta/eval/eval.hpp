// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "peta/attacks/attacks.hpp"

namespace peta::evaluation {

using attacks::AttackArtifact;
using attacks::DeployedModel;
using model::ModelConfig;
using numerics::ParamSet;
using textdata::Dataset;

enum class Setting { full_knowledge, peft_transfer, domain_shift };

std::string setting_name(Setting s);
Setting parse_setting(const std::string& name);

// Attacker-knowledge configuration. full_knowledge: same PEFT method and
// domain on both sides. peft_transfer: proxy PEFT method, same domain.
// domain_shift: proxy domain, same PEFT method.
struct KnowledgeSetting {
    Setting mode = Setting::full_knowledge;
    peft::PeftKind attacker_peft;
    peft::PeftKind victim_peft;
    int32_t attacker_domain = 0;
    int32_t victim_domain = 0;

    void validate() const;
};

// Everything one experiment cell needs, independent of file layout.
struct RunSpec {
    ModelConfig model;
    textdata::CorpusSpec corpus;  // domain_id is overridden per side
    poison::TriggerSpec trigger;
    KnowledgeSetting setting;
    attacks::BilevelHyper bilevel;
    attacks::FullFtHyper upper_only{2e-4, 3, 16};
    attacks::FullFtHyper badnet{2e-4, 3, 16};
    double badnet_rate = 0.25;
    attacks::LwpHyper lwp;
    std::vector<std::string> lwp_base_tokens = {"cf", "bb", "ak", "mn"};
    std::vector<double> dp_rates = {0.05, 0.10, 0.15, 0.20, 0.25};
    peft::TrainHyper victim;
    uint64_t seed = 1;
};

struct ExperimentReport {
    std::string setting;
    std::string attack;
    uint64_t seed = 0;
    double acc = 0.0;
    double lfr = 0.0;
    double clean_acc = 0.0;
    double fraction = 0.0;  // realized trainable fraction of the victim delta
    std::string detail_json;  // hypers, sub-seeds, extra metrics
};

// Argmax predictions; ties break to the lowest class index.
std::vector<int32_t> predict(const DeployedModel& m, const Dataset& data);

double clean_accuracy(const DeployedModel& m, const Dataset& test);

// Filters out target-class examples, inserts the trigger into the rest and
// reports the fraction classified as the target.
double label_flip_rate(const DeployedModel& m, const Dataset& test, const poison::TriggerSpec& spec,
                       const textdata::Vocab& vocab, uint64_t seed);

// Seeded sub-streams for one experiment cell.
uint64_t corpus_seed(const RunSpec& spec, int32_t domain);
uint64_t split_seed(const RunSpec& spec);

textdata::Corpus attacker_corpus(const RunSpec& spec);
textdata::Corpus victim_corpus(const RunSpec& spec);

// What the victim actually trains on: D' of the shared corpus in the
// full-knowledge and PEFT-transfer settings, the victim domain's own train
// split under domain shift. Always clean.
Dataset victim_training_data(const RunSpec& spec, const textdata::Corpus& vic_corpus);

// Attacker phase for a named attack, starting from the benign backbone.
AttackArtifact attacker_phase(const RunSpec& spec, const ParamSet& pretrained, const std::string& attack,
                              const textdata::Corpus& atk_corpus);

// Victim phase: fresh delta over the released backbone, clean training data,
// purity enforced.
DeployedModel victim_phase(const RunSpec& spec, ParamSet theta_star, const textdata::Corpus& vic_corpus);

struct CleanBaseline {
    DeployedModel deployed;
    double acc = 0.0;
    double lfr = 0.0;
};

CleanBaseline clean_baseline(const RunSpec& spec, const ParamSet& pretrained, const textdata::Corpus& vic_corpus);

// The trigger used at evaluation time (LWP evaluates its first combinatorial
// pair, everything else the configured trigger).
poison::TriggerSpec eval_trigger(const RunSpec& spec, const std::string& attack);

// End-to-end cell: attacker phase, strip, victim phase, metrics.
ExperimentReport run_experiment(const RunSpec& spec, const ParamSet& pretrained, const std::string& attack,
                                const textdata::Corpus& atk_corpus, const textdata::Corpus& vic_corpus,
                                const CleanBaseline& baseline);

// DP sweep over the configured rates; selects the smallest rate whose ACC is
// at least peta_acc. Infeasible rates are skipped and recorded.
struct DpSweep {
    std::vector<ExperimentReport> per_rate;
    std::vector<double> rates;
    int32_t selected = -1;  // index into per_rate, -1 when nothing qualifies
};

DpSweep dp_sweep(const RunSpec& spec, const ParamSet& pretrained, const textdata::Corpus& vic_corpus,
                 const CleanBaseline& baseline, double peta_acc);

// Canonical row order for tables: clean, dp, upper-only, badnet, lwp, peta.
int32_t attack_order(const std::string& attack);

// Per-seed rows sorted deterministically, one mean row per (setting, attack)
// group, fixed-precision formatting. Byte-identical across reruns.
std::string suite_csv(std::vector<ExperimentReport> reports);

}  // namespace peta::evaluation
