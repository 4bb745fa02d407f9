// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "peta/cli/config.hpp"

namespace peta::cli {

// File-level pipeline. Every stage writes its outputs plus a manifest
// (effective config slice, input hashes, output hashes); a stage whose
// manifest already matches is skipped, and downstream stages fail loudly
// when an upstream manifest does not match the current config.
//
// Layout under the output root:
//   pretrain/<seed>/backbone.ckpt
//   attack/<attack>/<variant>/<seed>/{artifact.ckpt, log.tsv, bundle/...}
//   victim/<setting>/<attack>/<seed>/deployed.ckpt
//   reports/<setting>/<attack>/seed<k>.json, reports/summary.{csv,json}
//   plots/<setting>.tsv
struct Pipeline {
    ExperimentConfig cfg;
    std::string root;  // resolved output root (PETA_OUT_ROOT env + out_dir)

    explicit Pipeline(ExperimentConfig config);

    std::string pretrain_stage(uint64_t seed);

    // bundle_override: reuse a previously written bundle directory instead
    // of regenerating the attacker-side data (attack command --bundle).
    std::string attack_stage(const std::string& setting, const std::string& attack, uint64_t seed,
                             const std::string& bundle_override = "");

    std::string victim_stage(const std::string& setting, const std::string& attack, uint64_t seed);

    evaluation::ExperimentReport evaluate_stage(const std::string& setting, const std::string& attack,
                                                uint64_t seed);

    // Full grid: pretrain, all attacks, victims, reports, summary, plots.
    // Per-cell failures are recorded and do not stop the suite.
    int suite_stage();

    std::string summary_csv_path() const { return root + "/reports/summary.csv"; }

private:
    std::string attack_dir(const std::string& setting, const std::string& attack, uint64_t seed) const;
    std::string victim_dir(const std::string& setting, const std::string& attack, uint64_t seed) const;
};

// Renders per-setting bar data (attack, acc, lfr) from the summary CSV's
// mean rows. Values are copied verbatim, never recomputed. Returns the
// written file paths.
std::vector<std::string> emit_plots(const std::string& csv_path, const std::string& plots_dir);

// Entry point shared by the CLI binary: runs one command, returns the
// process exit code (0 ok, 1 config error, 2 runtime failure).
struct CommandOptions {
    std::string config_path;
    std::string corpus_spec_path;  // --corpus-spec
    std::string peft_override;     // --peft
    std::string attack_override;   // --attack
    std::string setting_override;  // --setting
    std::string bundle_path;       // --bundle
    std::string out_override;      // --out
    int64_t seed_override = -1;    // --seed
};

int run_command(const std::string& command, const CommandOptions& opts);

}  // namespace peta::cli
