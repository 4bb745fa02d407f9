// SPDX-License-Identifier: Apache-2.0
#include "peta/cli/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "peta/numerics/checkpoint.hpp"
#include "peta/numerics/rng.hpp"

namespace peta::cli {

namespace fs = std::filesystem;
using evaluation::ExperimentReport;
using evaluation::RunSpec;
using numerics::ParamSet;
using numerics::Rng;

namespace {

constexpr const char* kVersionTag = "peta-harness/1";

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text_atomic(const std::string& path, const std::string& content) {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out << content;
    }
    fs::rename(tmp, target);
}

std::string file_hash_hex(const std::string& path) { return hex64(fnv1a64(read_file(path))); }

json load_manifest(const std::string& dir) {
    const std::string path = dir + "/manifest.json";
    if (!fs::exists(path)) return json();
    std::ifstream in(path);
    return json::parse(in, nullptr, true, true);
}

void write_manifest(const std::string& dir, const std::string& stage, const json& slice,
                    const std::map<std::string, std::string>& inputs, const std::vector<std::string>& outputs) {
    json m;
    m["stage"] = stage;
    m["tool"] = kVersionTag;
    m["slice"] = slice;
    m["slice_hash"] = hex64(fnv1a64(slice.dump()));
    m["inputs"] = inputs;
    json outs;
    for (const auto& path : outputs) {
        outs[fs::path(path).filename().string()] = file_hash_hex(path);
    }
    m["outputs"] = outs;
    write_text_atomic(dir + "/manifest.json", m.dump(2) + "\n");
}

// A stage is fresh when its manifest matches the slice and every recorded
// output still hashes to the recorded value.
bool stage_fresh(const std::string& dir, const json& slice) {
    const json m = load_manifest(dir);
    if (m.is_null() || !m.contains("slice") || m["slice"] != slice) return false;
    if (!m.contains("outputs")) return false;
    for (const auto& [name, hash] : m["outputs"].items()) {
        const std::string path = dir + "/" + name;
        if (!fs::exists(path) || file_hash_hex(path) != hash.get<std::string>()) return false;
    }
    return true;
}

void require_upstream(const std::string& dir, const json& slice, const std::string& what) {
    const std::string manifest_path = dir + "/manifest.json";
    if (!fs::exists(manifest_path)) {
        throw ConfigError("missing upstream artifact: " + what + " has not been produced (expected manifest " +
                          manifest_path + ")");
    }
    const json m = load_manifest(dir);
    if (!m.contains("slice") || m["slice"] != slice) {
        throw ConfigError("stale upstream artifact: " + what + " was built from a different configuration; see " +
                          manifest_path + " (slice hash " +
                          (m.contains("slice_hash") ? m["slice_hash"].get<std::string>() : "?") + ")");
    }
}

json model_json(const model::ModelConfig& m) {
    return json{{"vocab_size", m.vocab_size}, {"d_model", m.d_model},       {"heads", m.heads},
                {"layers", m.layers},         {"ffn", m.ffn},               {"max_len", m.max_len},
                {"class_count", m.class_count}};
}

std::string two_digit_pct(double rate) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%02d", static_cast<int>(rate * 100.0 + 0.5));
    return buf;
}

}  // namespace

Pipeline::Pipeline(ExperimentConfig config) : cfg(std::move(config)) {
    cfg.validate();
    fs::path base = cfg.out_dir;
    if (const char* env = std::getenv("PETA_OUT_ROOT"); env && base.is_relative()) {
        base = fs::path(env) / base;
    }
    root = base.string();
}

std::string Pipeline::attack_dir(const std::string& setting, const std::string& attack, uint64_t seed) const {
    const auto ks = cfg.knowledge(setting);
    const std::string variant = ks.attacker_peft.name() + "-d" + std::to_string(ks.attacker_domain);
    return root + "/attack/" + attack + "/" + variant + "/" + std::to_string(seed);
}

std::string Pipeline::victim_dir(const std::string& setting, const std::string& attack, uint64_t seed) const {
    return root + "/victim/" + setting + "/" + attack + "/" + std::to_string(seed);
}

std::string Pipeline::pretrain_stage(uint64_t seed) {
    const std::string dir = root + "/pretrain/" + std::to_string(seed);
    const std::string ckpt = dir + "/backbone.ckpt";
    json slice;
    slice["stage"] = "pretrain";
    slice["model"] = model_json(cfg.model);
    slice["corpus"] = cfg.to_json()["corpus"];
    slice["pretrain"] = cfg.to_json()["pretrain"];
    slice["seed"] = seed;
    if (stage_fresh(dir, slice)) return ckpt;

    const auto docs =
        textdata::generate_pretrain_docs(cfg.corpus, cfg.pretrain_docs, Rng(seed).derive(0x20).next_u64());
    ParamSet theta = model::init_backbone(cfg.model, Rng(seed).derive(0x21).next_u64());
    const auto stats = model::pretrain_backbone(theta, cfg.model, docs, cfg.pretrain, Rng(seed).derive(0x22).next_u64());
    std::cerr << "[pretrain] seed " << seed << ": loss " << stats.first_epoch_loss << " -> " << stats.last_epoch_loss
              << ", masked acc " << stats.masked_accuracy << "\n";

    json meta;
    meta["schema"] = 1;
    meta["kind"] = "backbone";
    meta["model"] = model_json(cfg.model);
    meta["seed"] = seed;
    meta["masked_accuracy"] = stats.masked_accuracy;
    numerics::save_checkpoint(ckpt, theta, meta.dump());
    write_manifest(dir, "pretrain", slice, {}, {ckpt});
    return ckpt;
}

std::string Pipeline::attack_stage(const std::string& setting, const std::string& attack, uint64_t seed,
                                   const std::string& bundle_override) {
    if (attack == "clean") throw ConfigError("attack stage: 'clean' is the baseline, not an attack");
    const uint64_t pretrain_seed = seed;
    const std::string pre_dir = root + "/pretrain/" + std::to_string(pretrain_seed);
    json pre_slice;
    pre_slice["stage"] = "pretrain";
    pre_slice["model"] = model_json(cfg.model);
    pre_slice["corpus"] = cfg.to_json()["corpus"];
    pre_slice["pretrain"] = cfg.to_json()["pretrain"];
    pre_slice["seed"] = seed;
    require_upstream(pre_dir, pre_slice, "pretrained backbone (run the pretrain command first)");

    const auto ks = cfg.knowledge(setting);
    const std::string dir = attack_dir(setting, attack, seed);
    const std::string ckpt = dir + "/artifact.ckpt";

    json slice;
    slice["stage"] = "attack";
    slice["attack"] = attack;
    slice["upstream"] = hex64(fnv1a64(pre_slice.dump()));
    slice["attacker_peft"] = ks.attacker_peft.name();
    slice["attacker_domain"] = ks.attacker_domain;
    slice["trigger"] = cfg.to_json()["trigger"];
    slice["seed"] = seed;
    slice["bundle_override"] = bundle_override;
    const json full = cfg.to_json();
    if (attack == "peta") slice["hyper"] = full["bilevel"];
    if (attack == "upper-only") slice["hyper"] = full["upper_only"];
    if (attack == "badnet") slice["hyper"] = full["badnet"];
    if (attack == "lwp") slice["hyper"] = full["lwp"];
    if (stage_fresh(dir, slice)) return ckpt;

    const ParamSet pretrained = numerics::load_checkpoint(root + "/pretrain/" + std::to_string(seed) +
                                                          "/backbone.ckpt")
                                    .params;
    RunSpec spec = cfg.cell_spec(setting, seed);
    const textdata::Corpus atk_corpus = evaluation::attacker_corpus(spec);

    attacks::AttackArtifact artifact;
    std::vector<std::string> outputs;
    if (attack == "peta" || attack == "upper-only") {
        poison::SplitBundle bundle;
        if (!bundle_override.empty()) {
            const textdata::Vocab vocab = textdata::Vocab::load(bundle_override + "/vocab.tsv");
            bundle.d1 = textdata::load_corpus_file(bundle_override + "/d1.tsv", vocab, true, 0);
            bundle.d2 = textdata::load_corpus_file(bundle_override + "/d2.tsv", vocab, true, 1000000);
            bundle.dprime = textdata::load_corpus_file(bundle_override + "/dprime.tsv", vocab, true, 2000000);
            const json binfo = json::parse(read_file(bundle_override + "/bundle.json"));
            bundle.trigger.tokens = binfo.at("trigger").at("tokens").get<std::vector<std::string>>();
            bundle.trigger.insertions = binfo.at("trigger").at("insertions").get<int32_t>();
            bundle.trigger.target_label = binfo.at("trigger").at("target_label").get<int32_t>();
            bundle.seed = binfo.at("seed").get<uint64_t>();
        } else {
            const auto halves = textdata::split_halves(atk_corpus.train, evaluation::split_seed(spec));
            bundle = poison::poison_partition(halves, spec.trigger, atk_corpus.vocab, spec.model.max_len,
                                              Rng(spec.seed).derive(0x12).next_u64());
            // Persist the bundle next to the artifact for reuse and audit.
            atk_corpus.vocab.save(dir + "/bundle/vocab.tsv");
            textdata::save_corpus_file(dir + "/bundle/d1.tsv", bundle.d1, atk_corpus.vocab, true);
            textdata::save_corpus_file(dir + "/bundle/d2.tsv", bundle.d2, atk_corpus.vocab, true);
            textdata::save_corpus_file(dir + "/bundle/dprime.tsv", bundle.dprime, atk_corpus.vocab, true);
            json binfo;
            binfo["seed"] = bundle.seed;
            binfo["trigger"] = {{"tokens", bundle.trigger.tokens},
                                {"insertions", bundle.trigger.insertions},
                                {"target_label", bundle.trigger.target_label}};
            write_text_atomic(dir + "/bundle/bundle.json", binfo.dump(2) + "\n");
        }
        const uint64_t attack_seed = Rng(spec.seed).derive(0x13).next_u64();
        if (attack == "peta") {
            attacks::BilevelHyper hyper = spec.bilevel;
            hyper.proxy = ks.attacker_peft;
            artifact = attacks::peta_bilevel_train(spec.model, pretrained, bundle, hyper, attack_seed);
        } else {
            textdata::Dataset mix = bundle.d1;
            mix.insert(mix.end(), bundle.d2.begin(), bundle.d2.end());
            artifact = attacks::upper_only_train(spec.model, pretrained, mix, spec.upper_only, attack_seed);
        }
    } else if (attack == "dp") {
        // DP does not poison weights; the artifact is the benign backbone.
        artifact.attack_name = "dp";
        artifact.seed = seed;
        artifact.theta_star = peft::strip(pretrained);
    } else {
        artifact = evaluation::attacker_phase(spec, pretrained, attack, atk_corpus);
    }

    json meta;
    meta["schema"] = 1;
    meta["kind"] = "backbone";
    meta["model"] = model_json(cfg.model);
    meta["attack"] = attack;
    meta["seed"] = seed;
    numerics::save_checkpoint(ckpt, artifact.theta_star, meta.dump());
    outputs.push_back(ckpt);

    std::ostringstream log;
    for (const auto& entry : artifact.log) {
        log << entry.step << '\t' << entry.phase << '\t' << entry.loss << '\n';
    }
    write_text_atomic(dir + "/log.tsv", log.str());
    outputs.push_back(dir + "/log.tsv");

    write_manifest(dir, "attack", slice, {{"backbone.ckpt", file_hash_hex(pre_dir + "/backbone.ckpt")}}, outputs);
    return ckpt;
}

std::string Pipeline::victim_stage(const std::string& setting, const std::string& attack, uint64_t seed) {
    const auto ks = cfg.knowledge(setting);
    RunSpec spec = cfg.cell_spec(setting, seed);
    const std::string dir = victim_dir(setting, attack, seed);
    const std::string ckpt = dir + "/deployed.ckpt";

    std::string upstream_ckpt;
    json upstream_note;
    if (attack == "clean" || attack == "dp") {
        upstream_ckpt = root + "/pretrain/" + std::to_string(seed) + "/backbone.ckpt";
        if (!fs::exists(upstream_ckpt)) {
            throw ConfigError("missing upstream artifact: pretrained backbone " + upstream_ckpt);
        }
        upstream_note = "pretrain";
    } else {
        upstream_ckpt = attack_dir(setting, attack, seed) + "/artifact.ckpt";
        if (!fs::exists(upstream_ckpt)) {
            throw ConfigError("missing upstream artifact: attack artifact " + upstream_ckpt +
                              " (run the attack command first; see its manifest)");
        }
        upstream_note = "attack";
    }

    json slice;
    slice["stage"] = "victim";
    slice["setting"] = setting;
    slice["attack"] = attack;
    slice["victim_peft"] = ks.victim_peft.name();
    slice["victim_domain"] = ks.victim_domain;
    slice["victim"] = cfg.to_json()["victim"];
    slice["seed"] = seed;
    slice["upstream_hash"] = file_hash_hex(upstream_ckpt);
    if (stage_fresh(dir, slice)) return ckpt;

    const ParamSet theta_star = numerics::load_checkpoint(upstream_ckpt).params;
    const textdata::Corpus vic_corpus = evaluation::victim_corpus(spec);
    attacks::DeployedModel deployed = evaluation::victim_phase(spec, theta_star, vic_corpus);

    ParamSet merged;
    for (const auto& [name, t] : deployed.theta.items()) merged.add(name, t);
    for (const auto& [name, t] : deployed.delta.items()) merged.add(name, t);
    json meta;
    meta["schema"] = 1;
    meta["kind"] = "deployed";
    meta["model"] = model_json(cfg.model);
    meta["peft"] = {{"kind", deployed.kind.name()},
                    {"rank", deployed.kind.rank},
                    {"alpha", deployed.kind.alpha},
                    {"bottleneck", deployed.kind.bottleneck}};
    meta["attack"] = attack;
    meta["setting"] = setting;
    meta["seed"] = seed;
    numerics::save_checkpoint(ckpt, merged, meta.dump());
    write_manifest(dir, "victim", slice, {{"upstream", file_hash_hex(upstream_ckpt)}}, {ckpt});
    return ckpt;
}

namespace {

attacks::DeployedModel load_deployed(const std::string& ckpt_path) {
    const numerics::Checkpoint ck = numerics::load_checkpoint(ckpt_path);
    const json meta = json::parse(ck.meta_json);
    if (meta.at("kind").get<std::string>() != "deployed") {
        throw IoError("checkpoint '" + ckpt_path + "' is not a deployed model");
    }
    attacks::DeployedModel m;
    m.cfg.vocab_size = meta["model"]["vocab_size"].get<int32_t>();
    m.cfg.d_model = meta["model"]["d_model"].get<int32_t>();
    m.cfg.heads = meta["model"]["heads"].get<int32_t>();
    m.cfg.layers = meta["model"]["layers"].get<int32_t>();
    m.cfg.ffn = meta["model"]["ffn"].get<int32_t>();
    m.cfg.max_len = meta["model"]["max_len"].get<int32_t>();
    m.cfg.class_count = meta["model"]["class_count"].get<int32_t>();
    m.kind.variant =
        meta["peft"]["kind"].get<std::string>() == "lora" ? peft::PeftVariant::lora : peft::PeftVariant::adapter;
    m.kind.rank = meta["peft"]["rank"].get<int32_t>();
    m.kind.alpha = meta["peft"]["alpha"].get<double>();
    m.kind.bottleneck = meta["peft"]["bottleneck"].get<int32_t>();
    for (const auto& [name, t] : ck.params.items()) {
        if (name.rfind("backbone/", 0) == 0) {
            m.theta.add(name, t);
        } else {
            m.delta.add(name, t);
        }
    }
    return m;
}

json report_to_json(const ExperimentReport& r) {
    json j;
    j["schema_version"] = 1;
    j["setting"] = r.setting;
    j["attack"] = r.attack;
    j["seed"] = r.seed;
    j["acc"] = r.acc;
    j["lfr"] = r.lfr;
    j["clean_acc"] = r.clean_acc;
    j["fraction"] = r.fraction;
    j["detail"] = r.detail_json.empty() ? json::object() : json::parse(r.detail_json);
    return j;
}

ExperimentReport report_from_json(const json& j) {
    ExperimentReport r;
    r.setting = j.at("setting").get<std::string>();
    r.attack = j.at("attack").get<std::string>();
    r.seed = j.at("seed").get<uint64_t>();
    r.acc = j.at("acc").get<double>();
    r.lfr = j.at("lfr").get<double>();
    r.clean_acc = j.at("clean_acc").get<double>();
    r.fraction = j.at("fraction").get<double>();
    r.detail_json = j.at("detail").dump();
    return r;
}

}  // namespace

ExperimentReport Pipeline::evaluate_stage(const std::string& setting, const std::string& attack, uint64_t seed) {
    RunSpec spec = cfg.cell_spec(setting, seed);
    const textdata::Corpus vic_corpus = evaluation::victim_corpus(spec);
    const std::string report_dir = root + "/reports/" + setting + "/" + attack;
    const std::string report_path = report_dir + "/seed" + std::to_string(seed) + ".json";

    const std::string clean_report_path = root + "/reports/" + setting + "/clean/seed" + std::to_string(seed) +
                                          ".json";

    ExperimentReport rep;
    rep.setting = setting;
    rep.attack = attack;
    rep.seed = seed;

    if (attack == "clean") {
        const std::string ckpt = victim_dir(setting, "clean", seed) + "/deployed.ckpt";
        if (!fs::exists(ckpt)) throw ConfigError("missing clean deployed model " + ckpt + " (run victim first)");
        const attacks::DeployedModel m = load_deployed(ckpt);
        rep.acc = evaluation::clean_accuracy(m, vic_corpus.test);
        rep.lfr = evaluation::label_flip_rate(m, vic_corpus.test, spec.trigger, vic_corpus.vocab, spec.seed);
        rep.clean_acc = rep.acc;
        rep.fraction = peft::trainable_fraction(m.delta, m.theta);
    } else if (attack == "dp") {
        if (!fs::exists(clean_report_path)) {
            throw ConfigError("dp evaluation needs the clean baseline report " + clean_report_path);
        }
        const std::string peta_report_path = root + "/reports/" + setting + "/peta/seed" + std::to_string(seed) +
                                             ".json";
        if (!fs::exists(peta_report_path)) {
            throw ConfigError("dp evaluation needs the peta report first (selection rule compares against peta's "
                              "ACC); missing " +
                              peta_report_path);
        }
        const ExperimentReport clean_rep = report_from_json(json::parse(read_file(clean_report_path)));
        const ExperimentReport peta_rep = report_from_json(json::parse(read_file(peta_report_path)));

        const ParamSet pretrained =
            numerics::load_checkpoint(root + "/pretrain/" + std::to_string(seed) + "/backbone.ckpt").params;
        evaluation::CleanBaseline base;
        base.acc = clean_rep.acc;
        base.lfr = clean_rep.lfr;
        const evaluation::DpSweep sweep = evaluation::dp_sweep(spec, pretrained, vic_corpus, base, peta_rep.acc);

        // Persist every candidate model's metrics; the report carries the
        // selected one.
        json detail;
        detail["rates"] = spec.dp_rates;
        json cand = json::array();
        for (size_t i = 0; i < sweep.per_rate.size(); ++i) {
            cand.push_back(json{{"rate", sweep.rates[i]},
                                {"acc", sweep.per_rate[i].acc},
                                {"lfr", sweep.per_rate[i].lfr},
                                {"detail", json::parse(sweep.per_rate[i].detail_json)}});
        }
        detail["candidates"] = cand;
        detail["peta_acc"] = peta_rep.acc;
        int32_t pick = sweep.selected;
        if (pick < 0) {
            // nothing qualified; fall back to the highest-ACC candidate
            double best = -2.0;
            for (size_t i = 0; i < sweep.per_rate.size(); ++i) {
                if (sweep.per_rate[i].acc > best) {
                    best = sweep.per_rate[i].acc;
                    pick = static_cast<int32_t>(i);
                }
            }
            detail["selected_rate"] = "none";
            detail["fallback_rate"] = sweep.rates[static_cast<size_t>(pick)];
        } else {
            detail["selected_rate"] = sweep.rates[static_cast<size_t>(pick)];
        }
        const auto& chosen = sweep.per_rate[static_cast<size_t>(pick)];
        rep.acc = chosen.acc;
        rep.lfr = chosen.lfr;
        rep.clean_acc = clean_rep.acc;
        rep.fraction = chosen.fraction;
        rep.detail_json = detail.dump();
    } else {
        const std::string ckpt = victim_dir(setting, attack, seed) + "/deployed.ckpt";
        if (!fs::exists(ckpt)) throw ConfigError("missing deployed model " + ckpt + " (run victim first)");
        if (!fs::exists(clean_report_path)) {
            throw ConfigError("evaluation needs the clean baseline report " + clean_report_path +
                              " (evaluate the clean cell first)");
        }
        const ExperimentReport clean_rep = report_from_json(json::parse(read_file(clean_report_path)));
        const attacks::DeployedModel m = load_deployed(ckpt);
        rep.acc = evaluation::clean_accuracy(m, vic_corpus.test);
        rep.lfr = evaluation::label_flip_rate(m, vic_corpus.test, evaluation::eval_trigger(spec, attack),
                                              vic_corpus.vocab, spec.seed);
        rep.clean_acc = clean_rep.acc;
        rep.fraction = peft::trainable_fraction(m.delta, m.theta);
    }
    write_text_atomic(report_path, report_to_json(rep).dump(2) + "\n");
    return rep;
}

int Pipeline::suite_stage() {
    // peta runs before dp so the selection rule has its reference ACC.
    std::vector<std::string> ordered_attacks;
    for (const char* a : {"peta", "upper-only", "badnet", "lwp", "dp"}) {
        for (const auto& configured : cfg.attacks) {
            if (configured == a) ordered_attacks.push_back(a);
        }
    }

    std::vector<ExperimentReport> reports;
    json failures = json::array();
    for (uint64_t seed : cfg.seeds) {
        pretrain_stage(seed);
    }
    for (const auto& setting : cfg.settings) {
        for (uint64_t seed : cfg.seeds) {
            try {
                victim_stage(setting, "clean", seed);
                reports.push_back(evaluate_stage(setting, "clean", seed));
            } catch (const std::exception& e) {
                std::cerr << "[suite] clean baseline failed (" << setting << ", seed " << seed << "): " << e.what()
                          << "\n";
                failures.push_back(json{{"setting", setting}, {"attack", "clean"}, {"seed", seed},
                                        {"error", e.what()}});
                continue;
            }
            for (const auto& attack : ordered_attacks) {
                try {
                    if (attack != "dp") {
                        attack_stage(setting, attack, seed);
                        victim_stage(setting, attack, seed);
                    } else {
                        attack_stage(setting, attack, seed);  // benign-copy artifact for uniform layout
                    }
                    reports.push_back(evaluate_stage(setting, attack, seed));
                } catch (const std::exception& e) {
                    std::cerr << "[suite] cell failed (" << setting << ", " << attack << ", seed " << seed
                              << "): " << e.what() << "\n";
                    failures.push_back(json{{"setting", setting}, {"attack", attack}, {"seed", seed},
                                            {"error", e.what()}});
                }
            }
        }
    }

    const std::string csv = evaluation::suite_csv(reports);
    write_text_atomic(summary_csv_path(), csv);
    json summary;
    summary["schema_version"] = 1;
    summary["config"] = cfg.to_json();
    json rows = json::array();
    for (const auto& r : reports) rows.push_back(report_to_json(r));
    summary["reports"] = rows;
    summary["failures"] = failures;
    write_text_atomic(root + "/reports/summary.json", summary.dump(2) + "\n");
    emit_plots(summary_csv_path(), root + "/plots");
    std::cerr << "[suite] " << reports.size() << " cells ok, " << failures.size() << " failed; summary at "
              << summary_csv_path() << "\n";
    return failures.empty() ? 0 : 2;
}

std::vector<std::string> emit_plots(const std::string& csv_path, const std::string& plots_dir) {
    const std::string text = read_file(csv_path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("emit_plots: empty CSV");
    if (line.rfind("setting,attack,seed", 0) != 0) throw ConfigError("emit_plots: unexpected CSV header: " + line);

    struct Row {
        std::string setting, attack, seed, acc, lfr;
    };
    std::vector<Row> rows;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::istringstream ls(line);
        std::string col;
        while (std::getline(ls, col, ',')) cols.push_back(col);
        if (cols.size() != 7) {
            std::cerr << "[plots] warning: skipping malformed row: " << line << "\n";
            continue;
        }
        bool numeric_ok = true;
        for (size_t i = 3; i < 7; ++i) {
            try {
                (void)std::stod(cols[i]);
            } catch (...) {
                numeric_ok = false;
            }
        }
        if (!numeric_ok) {
            std::cerr << "[plots] warning: skipping malformed row: " << line << "\n";
            continue;
        }
        const std::string key = cols[0] + "|" + cols[1] + "|" + cols[2];
        if (!seen.insert(key).second) {
            throw ConfigError("emit_plots: duplicate (setting, attack, seed) row: " + key);
        }
        rows.push_back(Row{cols[0], cols[1], cols[2], cols[3], cols[4]});
    }
    if (rows.empty()) throw ConfigError("emit_plots: CSV has no data rows");

    // One bar-data file per setting, values copied from the mean rows.
    std::vector<std::string> written;
    std::vector<std::string> settings;
    for (const auto& r : rows) {
        if (std::find(settings.begin(), settings.end(), r.setting) == settings.end()) settings.push_back(r.setting);
    }
    for (const auto& s : settings) {
        std::string out = "attack\tacc\tlfr\n";
        for (const auto& r : rows) {
            if (r.setting == s && r.seed == "mean") {
                out += r.attack + "\t" + r.acc + "\t" + r.lfr + "\n";
            }
        }
        const std::string path = plots_dir + "/" + s + ".tsv";
        write_text_atomic(path, out);
        written.push_back(path);
    }
    return written;
}

int run_command(const std::string& command, const CommandOptions& opts) {
    try {
        ExperimentConfig cfg =
            opts.config_path.empty() ? ExperimentConfig() : load_config(opts.config_path);
        if (!opts.corpus_spec_path.empty()) {
            const json cj = parse_json_file(opts.corpus_spec_path);
            json merged = cfg.to_json();
            merged["corpus"] = cj;
            cfg = ExperimentConfig::from_json(merged);
        }
        if (!opts.out_override.empty()) cfg.out_dir = opts.out_override;
        if (!opts.attack_override.empty()) cfg.attack = opts.attack_override;
        if (!opts.setting_override.empty()) cfg.setting = opts.setting_override;
        if (!opts.peft_override.empty()) {
            if (opts.peft_override == "lora") {
                cfg.victim_peft.variant = peft::PeftVariant::lora;
            } else if (opts.peft_override == "adapter") {
                cfg.victim_peft.variant = peft::PeftVariant::adapter;
            } else {
                throw ConfigError("--peft must be 'lora' or 'adapter'");
            }
        }
        if (opts.seed_override >= 0) cfg.seeds = {static_cast<uint64_t>(opts.seed_override)};
        cfg.validate();

        Pipeline pipe(cfg);
        if (command == "pretrain") {
            for (uint64_t seed : pipe.cfg.seeds) {
                const std::string path = pipe.pretrain_stage(seed);
                std::cout << path << "\n";
            }
            return 0;
        }
        if (command == "attack") {
            for (uint64_t seed : pipe.cfg.seeds) {
                const std::string path = pipe.attack_stage(pipe.cfg.setting, pipe.cfg.attack, seed, opts.bundle_path);
                std::cout << path << "\n";
            }
            return 0;
        }
        if (command == "victim") {
            for (uint64_t seed : pipe.cfg.seeds) {
                const std::string path = pipe.victim_stage(pipe.cfg.setting, pipe.cfg.attack, seed);
                std::cout << path << "\n";
            }
            return 0;
        }
        if (command == "evaluate") {
            for (uint64_t seed : pipe.cfg.seeds) {
                const auto rep = pipe.evaluate_stage(pipe.cfg.setting, pipe.cfg.attack, seed);
                std::cout << rep.setting << "," << rep.attack << "," << rep.seed << ": acc " << rep.acc << ", lfr "
                          << rep.lfr << "\n";
            }
            return 0;
        }
        if (command == "suite") {
            return pipe.suite_stage();
        }
        throw ConfigError("unknown command '" + command + "'");
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace peta::cli
