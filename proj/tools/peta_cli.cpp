// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver for the weight-poisoning harness. Subcommands mirror
// the pipeline stages: pretrain -> attack -> victim -> evaluate, or `suite`
// to run the whole grid.

#include <CLI11.hpp>
#include <string>

#include "peta/cli/pipeline.hpp"
#include "peta/numerics/kernels.hpp"

int main(int argc, char** argv) {
    CLI::App app{"peta: a trojan-attack harness for parameter-efficient fine-tuning"};
    app.require_subcommand(1);

    peta::cli::CommandOptions opts;
    std::string kernels_backend;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "experiment config (JSON, comments allowed)");
        cmd->add_option("--corpus-spec", opts.corpus_spec_path, "corpus spec JSON overriding the config's corpus");
        cmd->add_option("--out", opts.out_override, "output directory (PETA_OUT_ROOT env prefixes relative paths)");
        cmd->add_option("--seed", opts.seed_override, "restrict to a single seed");
        cmd->add_option("--kernels", kernels_backend, "force a kernel backend (scalar, avx2, neon)");
    };

    CLI::App* pretrain = app.add_subcommand("pretrain", "pretrain the benign backbone");
    add_common(pretrain);

    CLI::App* attack = app.add_subcommand("attack", "run an attacker phase and release a backbone artifact");
    add_common(attack);
    attack->add_option("--attack", opts.attack_override, "peta, upper-only, badnet, lwp or dp");
    attack->add_option("--setting", opts.setting_override, "full_knowledge, peft_transfer or domain_shift");
    attack->add_option("--bundle", opts.bundle_path, "reuse a previously written poison bundle directory");

    CLI::App* victim = app.add_subcommand("victim", "victim-side PEFT over a released backbone");
    add_common(victim);
    victim->add_option("--attack", opts.attack_override, "which artifact to fine-tune over (or 'clean')");
    victim->add_option("--setting", opts.setting_override, "knowledge setting");
    victim->add_option("--peft", opts.peft_override, "victim PEFT kind: lora or adapter");

    CLI::App* evaluate = app.add_subcommand("evaluate", "compute ACC/LFR for a deployed model");
    add_common(evaluate);
    evaluate->add_option("--attack", opts.attack_override, "attack to evaluate (or 'clean')");
    evaluate->add_option("--setting", opts.setting_override, "knowledge setting");

    CLI::App* suite = app.add_subcommand("suite", "full grid: pretrain, attacks, victims, reports, plots");
    add_common(suite);

    CLI11_PARSE(app, argc, argv);

    if (!kernels_backend.empty()) {
        try {
            peta::numerics::kernels::select(kernels_backend);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
    }

    return peta::cli::run_command(app.get_subcommands().front()->get_name(), opts);
}
