#pragma once

// Experiment configuration: strict JSON schema (unknown keys rejected) and a
// canonical 64-bit hash embedded in every emitted artifact.

#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "sude/denoiser.hpp"
#include "sude/sampler.hpp"
#include "sude/tokens.hpp"

namespace sude {

enum class FinetuneMode { Baseline, Sude, Cir, SudeCir };

inline FinetuneMode mode_from_string(const std::string& s) {
    if (s == "baseline") return FinetuneMode::Baseline;
    if (s == "sude") return FinetuneMode::Sude;
    if (s == "cir") return FinetuneMode::Cir;
    if (s == "sude_cir") return FinetuneMode::SudeCir;
    throw std::invalid_argument("unknown finetune mode: " + s);
}

inline std::string to_string(FinetuneMode m) {
    switch (m) {
        case FinetuneMode::Baseline: return "baseline";
        case FinetuneMode::Sude: return "sude";
        case FinetuneMode::Cir: return "cir";
        case FinetuneMode::SudeCir: return "sude_cir";
    }
    return "?";
}

inline bool mode_uses_sude(FinetuneMode m) {
    return m == FinetuneMode::Sude || m == FinetuneMode::SudeCir;
}
inline bool mode_uses_cir(FinetuneMode m) {
    return m == FinetuneMode::Cir || m == FinetuneMode::SudeCir;
}

struct ExperimentConfig {
    // schedule
    int T = 100;
    double beta_start = 1e-4;
    double beta_end = 0.05;
    double sigma_min = 1e-3;
    // model
    DenoiserDims dims;
    // data
    std::uint64_t dataset_seed = 7;
    int per_condition = 8;
    // pretrain
    int pretrain_epochs = 300;
    int pretrain_batch = 16;
    double pretrain_lr = 5e-3;
    double uncond_drop = 0.1;
    double token_drop = 0.3;
    // finetune
    FinetuneMode mode = FinetuneMode::Sude;
    TrainableMode trainable = TrainableMode::FullModel;
    double w_s = 0.4;
    double w_r = 1.0;
    int finetune_steps = 500;
    int finetune_batch = 4;  // (t, eps) draws averaged per update
    double finetune_lr = 1e-4;
    double finetune_clip = 10.0;  // global gradient-norm ceiling
    int subject_category = 0;
    std::uint64_t subject_seed = 11;
    bool truncation = true;  // test-only ablation flag
    // eval
    SampleMethod eval_method = SampleMethod::Ddim;
    int eval_steps = 50;
    double eval_eta = 0.0;
    int samples_per_prompt = 4;
    Template eval_template = Template::P1;
    // global
    std::uint64_t seed = 1;

    void validate() const {
        if (mode_uses_sude(mode) && w_s == 0.0)
            throw std::invalid_argument(
                "config: w_s = 0 contradicts mode=" + to_string(mode));
        if (w_s < 0.0 || w_r < 0.0)
            throw std::invalid_argument("config: negative loss weight");
        if (subject_category < 0 || subject_category > 3)
            throw std::invalid_argument("config: subject_category out of range");
        if (finetune_batch < 1)
            throw std::invalid_argument("config: finetune_batch must be >= 1");
    }

    // Baseline forces both extra weights to zero.
    double effective_ws() const {
        return mode_uses_sude(mode) ? w_s : 0.0;
    }
    double effective_wr() const {
        return mode_uses_cir(mode) ? w_r : 0.0;
    }
};

namespace cfg_detail {

inline void reject_unknown(const nlohmann::json& j,
                           const std::set<std::string>& known,
                           const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw std::invalid_argument("config: unknown key '" + it.key() +
                                        "' in " + where);
}

template <typename T>
void opt(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace cfg_detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    using namespace cfg_detail;
    reject_unknown(j, {"schedule", "model", "data", "pretrain", "finetune",
                       "eval", "seed"}, "root");
    ExperimentConfig c;
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        reject_unknown(s, {"T", "beta_start", "beta_end", "sigma_min"}, "schedule");
        opt(s, "T", c.T);
        opt(s, "beta_start", c.beta_start);
        opt(s, "beta_end", c.beta_end);
        opt(s, "sigma_min", c.sigma_min);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        reject_unknown(m, {"d_x", "d_c", "d_time", "hidden"}, "model");
        opt(m, "d_x", c.dims.d_x);
        opt(m, "d_c", c.dims.d_c);
        opt(m, "d_time", c.dims.d_time);
        opt(m, "hidden", c.dims.hidden);
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        reject_unknown(d, {"seed", "per_condition"}, "data");
        opt(d, "seed", c.dataset_seed);
        opt(d, "per_condition", c.per_condition);
    }
    if (j.contains("pretrain")) {
        const auto& p = j.at("pretrain");
        reject_unknown(p, {"epochs", "batch", "lr", "uncond_drop", "token_drop"},
                       "pretrain");
        opt(p, "epochs", c.pretrain_epochs);
        opt(p, "batch", c.pretrain_batch);
        opt(p, "lr", c.pretrain_lr);
        opt(p, "uncond_drop", c.uncond_drop);
        opt(p, "token_drop", c.token_drop);
    }
    if (j.contains("finetune")) {
        const auto& f = j.at("finetune");
        reject_unknown(f, {"mode", "trainable", "w_s", "w_r", "steps", "batch",
                           "lr", "clip", "subject_category", "subject_seed",
                           "truncation"},
                       "finetune");
        if (f.contains("mode")) c.mode = mode_from_string(f.at("mode"));
        if (f.contains("trainable"))
            c.trainable = trainable_from_string(f.at("trainable"));
        opt(f, "w_s", c.w_s);
        opt(f, "w_r", c.w_r);
        opt(f, "steps", c.finetune_steps);
        opt(f, "batch", c.finetune_batch);
        opt(f, "lr", c.finetune_lr);
        opt(f, "clip", c.finetune_clip);
        opt(f, "subject_category", c.subject_category);
        opt(f, "subject_seed", c.subject_seed);
        opt(f, "truncation", c.truncation);
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        reject_unknown(e, {"method", "steps", "eta", "samples_per_prompt",
                           "template"}, "eval");
        if (e.contains("method")) c.eval_method = method_from_string(e.at("method"));
        opt(e, "steps", c.eval_steps);
        opt(e, "eta", c.eval_eta);
        opt(e, "samples_per_prompt", c.samples_per_prompt);
        if (e.contains("template"))
            c.eval_template = template_from_string(e.at("template"));
    }
    cfg_detail::opt(j, "seed", c.seed);
    c.validate();
    return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["schedule"] = {{"T", c.T},
                     {"beta_start", c.beta_start},
                     {"beta_end", c.beta_end},
                     {"sigma_min", c.sigma_min}};
    j["model"] = {{"d_x", c.dims.d_x},
                  {"d_c", c.dims.d_c},
                  {"d_time", c.dims.d_time},
                  {"hidden", c.dims.hidden}};
    j["data"] = {{"seed", c.dataset_seed}, {"per_condition", c.per_condition}};
    j["pretrain"] = {{"epochs", c.pretrain_epochs},
                     {"batch", c.pretrain_batch},
                     {"lr", c.pretrain_lr},
                     {"uncond_drop", c.uncond_drop},
                     {"token_drop", c.token_drop}};
    j["finetune"] = {{"mode", to_string(c.mode)},
                     {"trainable", to_string(c.trainable)},
                     {"w_s", c.w_s},
                     {"w_r", c.w_r},
                     {"steps", c.finetune_steps},
                     {"batch", c.finetune_batch},
                     {"lr", c.finetune_lr},
                     {"clip", c.finetune_clip},
                     {"subject_category", c.subject_category},
                     {"subject_seed", c.subject_seed},
                     {"truncation", c.truncation}};
    j["eval"] = {{"method", to_string(c.eval_method)},
                 {"steps", c.eval_steps},
                 {"eta", c.eval_eta},
                 {"samples_per_prompt", c.samples_per_prompt},
                 {"template", to_string(c.eval_template)}};
    j["seed"] = c.seed;
    return j;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    nlohmann::json j;
    in >> j;
    return config_from_json(j);
}

// FNV-1a over the canonical (key-sorted) JSON dump.
inline std::string config_hash(const ExperimentConfig& c) {
    std::string s = config_to_json(c).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace sude
