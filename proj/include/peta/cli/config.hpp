// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "peta/eval/eval.hpp"

namespace peta::cli {

using nlohmann::json;

// Whole-experiment configuration. JSON on disk (comments allowed); every
// field has a default matching the harness conventions, unknown keys are
// rejected, and load -> save -> load round-trips to an identical value.
struct ExperimentConfig {
    int32_t version = 1;
    std::string out_dir = "runs/default";
    std::vector<uint64_t> seeds = {1, 2, 3};

    model::ModelConfig model;
    textdata::CorpusSpec corpus;
    poison::TriggerSpec trigger;

    std::vector<std::string> settings = {"full_knowledge"};
    std::vector<std::string> attacks = {"clean", "peta", "upper-only", "badnet", "lwp", "dp"};
    std::string setting = "full_knowledge";  // single-cell commands
    std::string attack = "peta";

    peft::PeftKind attacker_peft;  // proxy method for peft_transfer
    peft::PeftKind victim_peft;
    int32_t attacker_domain = 0;
    int32_t victim_domain = 0;
    int32_t shift_victim_domain = 1;  // victim domain under domain_shift

    model::PretrainHyper pretrain;
    int32_t pretrain_docs = 3000;

    attacks::BilevelHyper bilevel;
    peft::TrainHyper victim;
    attacks::FullFtHyper upper_only{2e-4, 3, 16};
    attacks::FullFtHyper badnet_hyper{2e-4, 3, 16};
    double badnet_rate = 0.25;
    attacks::LwpHyper lwp;
    std::vector<std::string> lwp_base_tokens = {"cf", "bb", "ak", "mn"};
    std::vector<double> dp_rates = {0.05, 0.10, 0.15, 0.20, 0.25};

    json to_json() const;
    static ExperimentConfig from_json(const json& j);
    void validate() const;

    // Knowledge setting and full run spec for one grid cell.
    evaluation::KnowledgeSetting knowledge(const std::string& setting_name) const;
    evaluation::RunSpec cell_spec(const std::string& setting_name, uint64_t seed) const;
};

json parse_json_file(const std::string& path);

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

}  // namespace peta::cli
