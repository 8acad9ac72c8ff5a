// Command-line front end: pretrain, finetune, sample, eval, sweep, verify,
// report. All subcommands share a JSON experiment config and the SUDE1
// checkpoint format; outputs carry the config hash for provenance.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sude/checkpoint.hpp"
#include "sude/config.hpp"
#include "sude/glyph.hpp"
#include "sude/oracle_eval.hpp"
#include "sude/report.hpp"
#include "sude/train.hpp"
#include "sude/verify.hpp"

namespace {

sude::ExperimentConfig load_or_default(const std::string& path) {
    if (path.empty()) return sude::ExperimentConfig{};
    return sude::load_config(path);
}

void apply_overrides(sude::ExperimentConfig& cfg,
                     const std::optional<std::uint64_t>& seed,
                     const std::optional<std::string>& mode,
                     const std::optional<double>& ws,
                     const std::optional<std::string>& tpl) {
    if (seed) cfg.seed = *seed;
    if (mode) cfg.mode = sude::mode_from_string(*mode);
    if (ws) cfg.w_s = *ws;
    if (tpl) cfg.eval_template = sude::template_from_string(*tpl);
    cfg.validate();
}

sude::OracleEvaluator trained_oracle(const sude::ExperimentConfig& cfg) {
    sude::OracleEvaluator oracle;
    oracle.train(cfg.dataset_seed);
    return oracle;
}

int run_verify(const std::string& suite) {
    std::vector<sude::VerifyRow> rows;
    if (suite == "math")
        rows = sude::verify_math();
    else if (suite == "gradients")
        rows = sude::verify_gradients();
    else if (suite == "sampler")
        rows = sude::verify_sampler();
    else
        rows = sude::verify_all();
    bool all = true;
    std::printf("%-32s %12s %12s %s\n", "property", "max_error", "tolerance",
                "status");
    for (const auto& r : rows) {
        std::printf("%-32s %12.3e %12.3e %s\n", r.name.c_str(), r.max_error,
                    r.tolerance, r.pass ? "pass" : "FAIL");
        all = all && r.pass;
    }
    return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conditional-diffusion subject-derivation laboratory"};
    app.require_subcommand(1);

    std::string config_path, ckpt_path, out_path, mode_str, tpl_str, suite =
        "all";
    std::string in_path, method_str = "ddim";
    std::optional<std::uint64_t> seed_opt;
    std::optional<std::string> mode_opt, tpl_opt;
    std::optional<double> ws_opt;
    int count = 4, steps = 50, category = 0;
    double eta = 0.0;
    std::vector<double> multipliers = {0.5, 1.0, 2.0};

    auto add_common = [&](CLI::App* sub, bool needs_out) {
        sub->add_option("--config", config_path, "experiment config JSON");
        sub->add_option("--seed", seed_opt, "override global seed");
        if (needs_out)
            sub->add_option("--out", out_path, "output path prefix")
                ->required();
    };

    auto* c_pre = app.add_subcommand("pretrain", "train the category backbone");
    add_common(c_pre, true);

    auto* c_ft = app.add_subcommand("finetune", "one-shot subject fine-tune");
    add_common(c_ft, true);
    c_ft->add_option("--ckpt", ckpt_path, "pretrained checkpoint")->required();
    c_ft->add_option("--mode", mode_opt,
                     "baseline | sude | cir | sude_cir");
    c_ft->add_option("--ws", ws_opt, "override w_s");

    auto* c_sam = app.add_subcommand("sample", "draw samples from a checkpoint");
    add_common(c_sam, true);
    c_sam->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
    c_sam->add_option("--count", count, "samples to draw");
    c_sam->add_option("--steps", steps, "sampler steps");
    c_sam->add_option("--method", method_str, "ddpm | ddim");
    c_sam->add_option("--eta", eta, "ddim eta");
    c_sam->add_option("--category", category, "condition on this category");

    auto* c_ev = app.add_subcommand("eval", "score a fine-tuned checkpoint");
    add_common(c_ev, true);
    c_ev->add_option("--ckpt", ckpt_path, "fine-tuned checkpoint")->required();
    c_ev->add_option("--template", tpl_opt, "P0 | P1 | P2 | P3");

    auto* c_sw = app.add_subcommand("sweep", "w_s multiplier sweep");
    add_common(c_sw, true);
    c_sw->add_option("--ckpt", ckpt_path, "pretrained checkpoint")->required();
    c_sw->add_option("--multipliers", multipliers, "w_s multipliers");
    c_sw->add_option("--mode", mode_opt, "finetune mode for the sweep");

    auto* c_vf = app.add_subcommand("verify", "run verification suites");
    c_vf->add_option("--suite", suite, "math | gradients | sampler | all");

    auto* c_rp = app.add_subcommand("report", "summarize an eval report JSON");
    c_rp->add_option("--in", in_path, "eval report JSON")->required();
    c_rp->add_option("--out", out_path, "summary CSV (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_vf->parsed()) return run_verify(suite);

        if (c_pre->parsed()) {
            sude::ExperimentConfig cfg = load_or_default(config_path);
            apply_overrides(cfg, seed_opt, std::nullopt, std::nullopt,
                            std::nullopt);
            sude::PretrainResult pre = sude::pretrain(cfg);
            sude::save_checkpoint(pre.model, sude::config_hash(cfg), out_path);
            sude::write_loss_curve(pre.epoch_loss, out_path + ".loss.csv",
                                   sude::config_hash(cfg));
            std::cout << "wrote " << out_path << " (final epoch loss "
                      << pre.epoch_loss.back() << ")\n";
            return 0;
        }

        if (c_ft->parsed()) {
            sude::ExperimentConfig cfg = load_or_default(config_path);
            apply_overrides(cfg, seed_opt, mode_opt, ws_opt, std::nullopt);
            sude::LoadedCheckpoint pre = sude::load_checkpoint(ckpt_path);
            sude::FinetuneResult ft = sude::finetune(cfg, pre.model);
            sude::save_checkpoint(ft.model, sude::config_hash(cfg), out_path);
            sude::write_training_log(ft.log, out_path + ".log.csv",
                                     sude::config_hash(cfg));
            int fired = 0;
            for (const auto& row : ft.log)
                if (row.loss.gate == 0) ++fired;
            std::cout << "wrote " << out_path << " (mode "
                      << sude::to_string(cfg.mode) << ", gate fired " << fired
                      << "/" << ft.log.size() << " steps)\n";
            return 0;
        }

        if (c_sam->parsed()) {
            sude::ExperimentConfig cfg = load_or_default(config_path);
            apply_overrides(cfg, seed_opt, std::nullopt, std::nullopt,
                            std::nullopt);
            sude::LoadedCheckpoint lc = sude::load_checkpoint(ckpt_path);
            sude::NoiseSchedule sched = sude::make_schedule(
                cfg.T, cfg.beta_start, cfg.beta_end, cfg.sigma_min);
            sude::Condition cond =
                sude::category_condition(category, lc.model.vocab());
            sude::MeanPredictor pred = [&](const sude::Array& x, int t) {
                return lc.model.predict_mean_value(x, cond, t, sched);
            };
            sude::SampleMethod m = method_str == "ddpm"
                                       ? sude::SampleMethod::Ddpm
                                       : sude::SampleMethod::Ddim;
            auto trajs = sude::sample(pred, cfg.dims.d_x, sched, m, steps, eta,
                                      cfg.seed, count);
            std::vector<sude::Array> images;
            for (const auto& tr : trajs) images.push_back(tr.final_x0);
            sude::write_pgm_grid(images, out_path + ".pgm");
            sude::write_float_blob(images, out_path + ".f32");
            std::cout << "wrote " << out_path << ".pgm and " << out_path
                      << ".f32\n";
            return 0;
        }

        if (c_ev->parsed()) {
            sude::ExperimentConfig cfg = load_or_default(config_path);
            apply_overrides(cfg, seed_opt, std::nullopt, std::nullopt, tpl_opt);
            sude::LoadedCheckpoint lc = sude::load_checkpoint(ckpt_path);
            sude::SubjectInstance subject =
                sude::make_subject(cfg.subject_category, cfg.subject_seed);
            sude::OracleEvaluator oracle = trained_oracle(cfg);
            sude::EvalReport rep =
                sude::evaluate(lc.model, cfg, subject, 0, oracle);
            sude::write_report_csv({rep}, out_path + ".csv");
            sude::write_report_json({rep}, out_path + ".json");
            for (std::size_t i = 0; i < rep.rows.size(); ++i) {
                sude::write_pgm_grid(rep.rows[i].samples,
                                     out_path + ".prompt" + std::to_string(i) +
                                         ".pgm");
                sude::write_float_blob(rep.rows[i].samples,
                                       out_path + ".prompt" +
                                           std::to_string(i) + ".f32");
            }
            std::cout << "attribute alignment "
                      << rep.mean_attribute_alignment() << ", fidelity "
                      << rep.subject_fidelity() << "\n";
            return 0;
        }

        if (c_sw->parsed()) {
            sude::ExperimentConfig cfg = load_or_default(config_path);
            apply_overrides(cfg, seed_opt, mode_opt, std::nullopt,
                            std::nullopt);
            sude::LoadedCheckpoint pre = sude::load_checkpoint(ckpt_path);
            sude::OracleEvaluator oracle = trained_oracle(cfg);
            auto reports = sude::ws_sweep(pre.model, cfg, multipliers, oracle);
            sude::write_report_csv(reports, out_path + ".csv");
            sude::write_report_json(reports, out_path + ".json");
            for (std::size_t i = 0; i < reports.size(); ++i)
                std::cout << "x" << multipliers[i] << ": alignment "
                          << reports[i].mean_attribute_alignment()
                          << ", fidelity " << reports[i].subject_fidelity()
                          << "\n";
            return 0;
        }

        if (c_rp->parsed()) {
            std::ifstream in(in_path);
            if (!in) throw std::runtime_error("cannot open " + in_path);
            nlohmann::json j = nlohmann::json::parse(in);
            std::ostringstream csv;
            csv << "run_id,mode,w_s,attribute_alignment,context_alignment,"
                   "category_prob,fidelity\n";
            for (const auto& rep : j.at("reports")) {
                double attr = 0.0, ctx = 0.0;
                int na = 0, nc = 0;
                for (const auto& row : rep.at("rows")) {
                    std::string kind = row.at("kind");
                    if (kind == "attribute") {
                        attr += row.at("alignment").get<double>();
                        ++na;
                    } else if (kind == "context") {
                        ctx += row.at("context_prob").get<double>();
                        ++nc;
                    }
                }
                csv << rep.at("run_id").get<std::string>() << ","
                    << rep.at("mode").get<std::string>() << ","
                    << rep.at("w_s").get<double>() << ","
                    << (na ? attr / na : 0.0) << "," << (nc ? ctx / nc : 0.0)
                    << "," << rep.at("subject_category_prob").get<double>()
                    << "," << rep.at("subject_fidelity").get<double>() << "\n";
            }
            if (out_path.empty()) {
                std::cout << csv.str();
            } else {
                std::ofstream out(out_path);
                out << csv.str();
                std::cout << "wrote " << out_path << "\n";
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
