#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "sude/checkpoint.hpp"
#include "sude/report.hpp"
#include "sude/train.hpp"

using namespace sude;

namespace {

ExperimentConfig tiny_config() {
    ExperimentConfig c;
    c.per_condition = 1;
    c.pretrain_epochs = 2;
    c.finetune_steps = 25;
    c.samples_per_prompt = 2;
    c.eval_steps = 8;
    return c;
}

const Denoiser& tiny_pretrained() {
    static PretrainResult res = pretrain(tiny_config());
    return res.model;
}

const OracleEvaluator& tiny_oracle() {
    static OracleEvaluator oracle = [] {
        OracleEvaluator o;
        o.train(3, 1200, 8);
        return o;
    }();
    return oracle;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("pretraining logs one finite loss per epoch and learns") {
    ExperimentConfig cfg = tiny_config();
    PretrainResult res = pretrain(cfg);
    REQUIRE(res.epoch_loss.size() == static_cast<std::size_t>(cfg.pretrain_epochs));
    for (double l : res.epoch_loss) CHECK(std::isfinite(l));
    CHECK(res.epoch_loss.back() < res.epoch_loss.front());
}

TEST_CASE("identical configs pretrain to byte-identical weights") {
    ExperimentConfig cfg = tiny_config();
    PretrainResult a = pretrain(cfg);
    PretrainResult b = pretrain(cfg);
    CHECK(checkpoint_bytes(a.model, "h") == checkpoint_bytes(b.model, "h"));
    CHECK(a.epoch_loss == b.epoch_loss);
    ExperimentConfig other = cfg;
    other.seed = cfg.seed + 1;
    PretrainResult c = pretrain(other);
    CHECK(checkpoint_bytes(a.model, "h") != checkpoint_bytes(c.model, "h"));
}

TEST_CASE("fine-tuning is deterministic and mode-sensitive") {
    ExperimentConfig cfg = tiny_config();
    const Denoiser& pre = tiny_pretrained();
    FinetuneResult a = finetune(cfg, pre);
    FinetuneResult b = finetune(cfg, pre);
    CHECK(checkpoint_bytes(a.model, "h") == checkpoint_bytes(b.model, "h"));
    REQUIRE(a.log.size() == static_cast<std::size_t>(cfg.finetune_steps));
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].loss.total == b.log[i].loss.total);
        CHECK((a.log[i].loss.gate == 0 || a.log[i].loss.gate == 1));
    }

    ExperimentConfig base = cfg;
    base.mode = FinetuneMode::Baseline;
    FinetuneResult c = finetune(base, pre);
    CHECK(checkpoint_bytes(a.model, "h") != checkpoint_bytes(c.model, "h"));
    // The baseline still logs the diagnostic terms but gives them no weight.
    CHECK(c.log[0].loss.w_s == 0.0);
    CHECK(a.log[0].loss.w_s == cfg.w_s);
}

TEST_CASE("fine-tuning moves only the requested parameters") {
    ExperimentConfig cfg = tiny_config();
    cfg.trainable = TrainableMode::EmbeddingOnly;
    const Denoiser& pre = tiny_pretrained();
    FinetuneResult res = finetune(cfg, pre);
    Vocabulary v;
    for (const auto& [name, value] : res.model.params()) {
        if (name == Denoiser::emb_name(v.row_of(subj_token(res.subject_token_id))))
            CHECK(value.values != pre.param(name).values);
        else
            CHECK(value.values == pre.param(name).values);
    }
}

TEST_CASE("evaluation produces the full prompt battery") {
    ExperimentConfig cfg = tiny_config();
    FinetuneResult ft = finetune(cfg, tiny_pretrained());
    EvalReport rep = evaluate(ft.model, cfg, ft.subject, ft.subject_token_id,
                              tiny_oracle());
    REQUIRE(rep.rows.size() == 9);  // subject + six attributes + two contexts
    int subj = 0, attr = 0, ctx = 0;
    for (const auto& row : rep.rows) {
        subj += row.kind == PromptKind::Subject;
        attr += row.kind == PromptKind::Attribute;
        ctx += row.kind == PromptKind::Context;
        CHECK(row.samples.size() ==
              static_cast<std::size_t>(cfg.samples_per_prompt));
        CHECK(row.alignment >= 0.0);
        CHECK(row.alignment <= 1.0);
        CHECK(row.fidelity >= 0.0);
        CHECK(row.fidelity <= 1.0);
    }
    CHECK(subj == 1);
    CHECK(attr == 6);
    CHECK(ctx == 2);
    CHECK(rep.mean_attribute_alignment() >= 0.0);
    CHECK(rep.subject_fidelity() == rep.rows[0].fidelity);
}

TEST_CASE("report writers emit the documented formats") {
    ExperimentConfig cfg = tiny_config();
    FinetuneResult ft = finetune(cfg, tiny_pretrained());
    EvalReport rep = evaluate(ft.model, cfg, ft.subject, ft.subject_token_id,
                              tiny_oracle());

    write_report_csv({rep}, "test_rep.csv");
    std::string csv = slurp("test_rep.csv");
    std::remove("test_rep.csv");
    CHECK(csv.rfind("run_id,mode,w_s,template,prompt,alignment,fidelity\n", 0) == 0);
    CHECK(csv.find("attr_rot45") != std::string::npos);

    write_report_json({rep}, "test_rep.json");
    nlohmann::json doc = nlohmann::json::parse(slurp("test_rep.json"));
    std::remove("test_rep.json");
    REQUIRE(doc.contains("reports"));
    REQUIRE(doc["reports"].size() == 1);
    CHECK(doc["reports"][0]["rows"].size() == 9);
    CHECK(doc["reports"][0].contains("mean_attribute_alignment"));

    std::vector<Array> imgs;
    for (const auto& row : rep.rows)
        for (const auto& im : row.samples) imgs.push_back(im);
    write_pgm_grid(imgs, "test_grid.pgm");
    std::string pgm = slurp("test_grid.pgm");
    std::remove("test_grid.pgm");
    CHECK(pgm.rfind("P5\n", 0) == 0);

    write_float_blob(imgs, "test_blob.f32");
    std::ifstream blob("test_blob.f32", std::ios::binary | std::ios::ate);
    auto bytes = blob.tellg();
    blob.close();
    std::remove("test_blob.f32");
    CHECK(bytes == static_cast<std::streamoff>(imgs.size() * 256 * 4));
}

TEST_CASE("training log and loss curve files carry headers") {
    ExperimentConfig cfg = tiny_config();
    FinetuneResult ft = finetune(cfg, tiny_pretrained());
    write_training_log(ft.log, "deadbeef", "test_log.csv");
    std::string log = slurp("test_log.csv");
    std::remove("test_log.csv");
    CHECK(log.rfind("# config_hash=deadbeef\n", 0) == 0);
    CHECK(log.find("step,t,l_sub,l_sude_raw,tau_t,gate,l_reg,total\n") !=
          std::string::npos);

    write_loss_curve({0.5, 0.25}, "deadbeef", "test_curve.csv");
    std::string curve = slurp("test_curve.csv");
    std::remove("test_curve.csv");
    CHECK(curve.find("epoch,loss\n0,0.5\n1,0.25\n") != std::string::npos);
}

TEST_CASE("w_s sweep shares the pretrained model and tags each report") {
    ExperimentConfig cfg = tiny_config();
    auto reps = ws_sweep(tiny_pretrained(), cfg, {0.5, 1.0}, tiny_oracle());
    REQUIRE(reps.size() == 2);
    CHECK(reps[0].w_s == Catch::Approx(cfg.w_s * 0.5));
    CHECK(reps[1].w_s == Catch::Approx(cfg.w_s));
    CHECK_THROWS_AS(ws_sweep(tiny_pretrained(), cfg, {0.0}, tiny_oracle()),
                    std::invalid_argument);
}
