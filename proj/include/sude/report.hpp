#pragma once

// Evaluation of a fine-tuned model: prompt construction, sampling, oracle
// scoring, and artifact emission (CSV/JSON reports, PGM sample grids, raw
// float blobs, training logs). Every artifact embeds the config hash.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sude/config.hpp"
#include "sude/glyph.hpp"
#include "sude/oracle_eval.hpp"
#include "sude/sampler.hpp"
#include "sude/train.hpp"

namespace sude {

enum class PromptKind { Subject, Attribute, Context };

struct EvalPrompt {
    std::string name;
    PromptKind kind = PromptKind::Subject;
    Condition cond;
    // Tokens whose head probabilities enter the alignment product.
    std::vector<ConditionToken> score_tokens;
};

inline std::string attr_name(int id) {
    switch (id) {
        case kAttrRot0: return "rot0";
        case kAttrRot45: return "rot45";
        case kAttrThin: return "thin";
        case kAttrThick: return "thick";
        case kAttrSmall: return "small";
        case kAttrLarge: return "large";
    }
    return "?";
}

// Prompt list: subject alone, subject + each attribute value, and subject +
// attribute + context.
inline std::vector<EvalPrompt> eval_prompts(int category, int subject_id,
                                            Template tpl) {
    auto subj = subj_token(subject_id);
    auto cat = cat_token(category);
    std::vector<EvalPrompt> out;
    out.push_back({"subject", PromptKind::Subject,
                   compose(subj, cat, {}, {}, tpl), {}});
    for (int a = 0; a < 6; ++a)
        out.push_back({"attr_" + attr_name(a), PromptKind::Attribute,
                       compose(subj, cat, {attr_token(a)}, {}, tpl),
                       {attr_token(a)}});
    for (int c = 0; c < 2; ++c)
        out.push_back({std::string("ctx_rot45_") + (c ? "light" : "dark"),
                       PromptKind::Context,
                       compose(subj, cat, {attr_token(kAttrRot45)},
                               {ctx_token(c)}, tpl),
                       {attr_token(kAttrRot45), ctx_token(c)}});
    return out;
}

struct EvalRow {
    std::string prompt;
    PromptKind kind = PromptKind::Subject;
    double alignment = 0.0;      // category x requested-token product
    double fidelity = 0.0;
    double category_prob = 0.0;  // category head alone
    double context_prob = 0.0;   // background head alone (context prompts)
    std::vector<Array> samples;
};

struct EvalReport {
    std::string run_id;
    std::string config_hash;
    FinetuneMode mode = FinetuneMode::Baseline;
    double w_s = 0.0;
    Template tpl = Template::P1;
    std::vector<EvalRow> rows;

    double mean_attribute_alignment() const {
        double s = 0.0;
        int n = 0;
        for (const auto& r : rows)
            if (r.kind == PromptKind::Attribute) {
                s += r.alignment;
                ++n;
            }
        return n ? s / n : 0.0;
    }
    double mean_context_alignment() const {
        double s = 0.0;
        int n = 0;
        for (const auto& r : rows)
            if (r.kind == PromptKind::Context) {
                s += r.context_prob;
                ++n;
            }
        return n ? s / n : 0.0;
    }
    double subject_category_prob() const {
        for (const auto& r : rows)
            if (r.kind == PromptKind::Subject) return r.category_prob;
        return 0.0;
    }
    double subject_fidelity() const {
        for (const auto& r : rows)
            if (r.kind == PromptKind::Subject) return r.fidelity;
        return 0.0;
    }
};

inline EvalReport evaluate(const Denoiser& model, const ExperimentConfig& cfg,
                           const SubjectInstance& subject, int subject_id,
                           const OracleEvaluator& oracle) {
    NoiseSchedule sched = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end,
                                        cfg.sigma_min);
    EvalReport rep;
    rep.config_hash = config_hash(cfg);
    rep.run_id = rep.config_hash + "-" + std::to_string(cfg.seed);
    rep.mode = cfg.mode;
    rep.w_s = cfg.effective_ws();
    rep.tpl = cfg.eval_template;

    std::vector<EvalPrompt> prompts =
        eval_prompts(subject.category, subject_id, cfg.eval_template);
    for (std::size_t pi = 0; pi < prompts.size(); ++pi) {
        const EvalPrompt& p = prompts[pi];
        MeanPredictor predict = [&](const Array& x, int t) {
            return model.predict_mean_value(x, p.cond, t, sched);
        };
        std::uint64_t pseed = mix_key(cfg.seed, mix_key(0x6576616cULL, pi));
        std::vector<SampleTrajectory> trajs =
            sample(predict, static_cast<std::size_t>(cfg.dims.d_x), sched,
                   cfg.eval_method, cfg.eval_steps, cfg.eval_eta, pseed,
                   cfg.samples_per_prompt);
        EvalRow row;
        row.prompt = p.name;
        row.kind = p.kind;
        for (auto& tr : trajs) row.samples.push_back(std::move(tr.final_x0));
        row.alignment =
            oracle.alignment_score(row.samples, subject.category, p.score_tokens);
        row.fidelity = oracle.fidelity_score(row.samples, subject.example);
        row.category_prob =
            oracle.alignment_score(row.samples, subject.category, {});
        if (p.kind == PromptKind::Context) {
            ConditionToken ctx{};
            for (auto tok : p.score_tokens)
                if (tok.kind == TokenKind::Context) ctx = tok;
            row.context_prob = oracle.alignment_score(row.samples, -1, {ctx});
        }
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

// ---- artifact writers ----

inline void write_pgm_grid(const std::vector<Array>& images,
                           const std::string& path) {
    if (images.empty()) throw std::invalid_argument("write_pgm_grid: no images");
    int n = static_cast<int>(images.size());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    int w = kGlyphRes * n, h = kGlyphRes;
    out << "P5\n" << w << " " << h << "\n255\n";
    for (int row = 0; row < h; ++row)
        for (int im = 0; im < n; ++im)
            for (int col = 0; col < kGlyphRes; ++col) {
                double v = images[im].values[static_cast<std::size_t>(row) *
                                                 kGlyphRes + col];
                int byte = static_cast<int>(std::lround((v + 1.0) * 127.5));
                out.put(static_cast<char>(std::clamp(byte, 0, 255)));
            }
}

inline void write_float_blob(const std::vector<Array>& images,
                             const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const Array& im : images)
        for (double v : im.values) {
            float f = static_cast<float>(v);
            char buf[4];
            std::memcpy(buf, &f, 4);
            out.write(buf, 4);  // little-endian host assumed (x86/arm64)
        }
}

inline void write_report_csv(const std::vector<EvalReport>& reports,
                             const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "run_id,mode,w_s,template,prompt,alignment,fidelity\n";
    for (const auto& rep : reports)
        for (const auto& row : rep.rows)
            out << rep.run_id << "," << to_string(rep.mode) << "," << rep.w_s
                << "," << to_string(rep.tpl) << "," << row.prompt << ","
                << row.alignment << "," << row.fidelity << "\n";
}

inline nlohmann::json report_to_json(const EvalReport& rep) {
    nlohmann::json rows = nlohmann::json::array();
    auto kind_name = [](PromptKind k) {
        switch (k) {
            case PromptKind::Subject: return "subject";
            case PromptKind::Attribute: return "attribute";
            case PromptKind::Context: return "context";
        }
        return "?";
    };
    for (const auto& r : rep.rows)
        rows.push_back({{"prompt", r.prompt},
                        {"kind", kind_name(r.kind)},
                        {"alignment", r.alignment},
                        {"fidelity", r.fidelity},
                        {"category_prob", r.category_prob},
                        {"context_prob", r.context_prob}});
    return {{"run_id", rep.run_id},
            {"config_hash", rep.config_hash},
            {"mode", to_string(rep.mode)},
            {"w_s", rep.w_s},
            {"template", to_string(rep.tpl)},
            {"mean_attribute_alignment", rep.mean_attribute_alignment()},
            {"mean_context_alignment", rep.mean_context_alignment()},
            {"subject_category_prob", rep.subject_category_prob()},
            {"subject_fidelity", rep.subject_fidelity()},
            {"rows", std::move(rows)}};
}

inline void write_report_json(const std::vector<EvalReport>& reports,
                              const std::string& path) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : reports) arr.push_back(report_to_json(r));
    nlohmann::json doc = {{"reports", std::move(arr)}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << doc.dump(2) << "\n";
}

inline void write_training_log(const std::vector<FinetuneLogRow>& log,
                               const std::string& config_hash,
                               const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# config_hash=" << config_hash << "\n";
    out << "step,t,l_sub,l_sude_raw,tau_t,gate,l_reg,total\n";
    out.precision(12);
    for (const auto& r : log)
        out << r.step << "," << r.t << "," << r.loss.l_sub << ","
            << r.loss.l_sude_raw << "," << r.loss.tau_t << "," << r.loss.gate
            << "," << r.loss.l_reg << "," << r.loss.total << "\n";
}

inline void write_loss_curve(const std::vector<double>& epoch_loss,
                             const std::string& config_hash,
                             const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# config_hash=" << config_hash << "\n";
    out << "epoch,loss\n";
    out.precision(12);
    for (std::size_t i = 0; i < epoch_loss.size(); ++i)
        out << i << "," << epoch_loss[i] << "\n";
}

// Fine-tune + evaluate per multiplier of the configured w_s, sharing the
// pretrained model.
inline std::vector<EvalReport> ws_sweep(const Denoiser& pretrained,
                                        const ExperimentConfig& base_cfg,
                                        const std::vector<double>& multipliers,
                                        const OracleEvaluator& oracle) {
    for (double m : multipliers)
        if (!(m > 0.0))
            throw std::invalid_argument("ws_sweep: multipliers must be positive");
    std::vector<EvalReport> out;
    for (double m : multipliers) {
        ExperimentConfig cfg = base_cfg;
        cfg.w_s = base_cfg.w_s * m;
        FinetuneResult ft = finetune(cfg, pretrained);
        out.push_back(evaluate(ft.model, cfg, ft.subject, ft.subject_token_id,
                               oracle));
    }
    return out;
}

}  // namespace sude
