#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "sude/glyph.hpp"
#include "sude/oracle_eval.hpp"
#include "sude/rng.hpp"

using namespace sude;

namespace {

double l2(const Array& a, const Array& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a.values[i] - b.values[i];
        s += d * d;
    }
    return std::sqrt(s);
}

OracleEvaluator& shared_oracle() {
    static OracleEvaluator oracle = [] {
        OracleEvaluator o;
        o.train(11);
        return o;
    }();
    return oracle;
}

}  // namespace

TEST_CASE("rendered glyphs are bounded and deterministic") {
    for (int cat = 0; cat < 4; ++cat) {
        GlyphSpec spec;
        spec.category = cat;
        Array img = render(spec);
        REQUIRE(img.size() == 256);
        for (double v : img.values) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
        CHECK(render(spec).values == img.values);
    }
}

TEST_CASE("every attribute toggle changes the rendered image") {
    GlyphSpec base;
    base.category = 1;
    Array ref = flatten(render(base));
    for (int axis = 0; axis < 4; ++axis) {
        GlyphSpec spec = base;
        if (axis == 0) spec.rot45 = !spec.rot45;
        if (axis == 1) spec.thick = !spec.thick;
        if (axis == 2) spec.large = !spec.large;
        if (axis == 3) spec.light_bg = !spec.light_bg;
        CHECK(l2(flatten(render(spec)), ref) > 0.5);
    }
}

TEST_CASE("the four categories are mutually distinguishable") {
    for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b) {
            GlyphSpec sa, sb;
            sa.category = a;
            sb.category = b;
            CHECK(l2(flatten(render(sa)), flatten(render(sb))) > 0.5);
        }
}

TEST_CASE("pretraining set covers every cell and holds no subject token") {
    Vocabulary vocab;
    auto set = gen_pretrain_set(0, 2, vocab);
    CHECK(set.size() == 64 * 2);
    std::set<std::vector<int>> cells;
    for (const auto& ex : set) {
        REQUIRE(ex.image.size() == 256);
        for (auto tok : ex.cond.tokens) CHECK(tok.kind != TokenKind::Subject);
        cells.insert({ex.spec.category, ex.spec.rot45, ex.spec.thick,
                      ex.spec.large, ex.spec.light_bg});
    }
    CHECK(cells.size() == 64);
    CHECK_THROWS_AS(gen_pretrain_set(0, 0, vocab), std::invalid_argument);
}

TEST_CASE("subjects deviate from the category default but stay in class") {
    for (int cat = 0; cat < 4; ++cat) {
        SubjectInstance s = make_subject(cat, 7 + cat);
        CHECK(s.category == cat);
        CHECK(s.hidden_spec.deformed());
        GlyphSpec plain = s.hidden_spec;
        plain.private_params = {0.0, 0.0, 0.0};
        double d = l2(s.example, flatten(render(plain)));
        CHECK(d > 0.5);    // visibly deformed
        CHECK(d < 12.0);   // but still recognizably the category shape
    }
    // Different seeds give different subjects.
    CHECK(l2(make_subject(0, 1).example, make_subject(0, 2).example) > 0.1);
    CHECK_THROWS_AS(make_subject(4, 0), std::invalid_argument);
}

TEST_CASE("zeroed private parameters reproduce the category default") {
    GlyphSpec spec;
    spec.category = 2;
    CHECK_FALSE(spec.deformed());
    SubjectInstance s = make_subject(2, 5);
    GlyphSpec undone = s.hidden_spec;
    undone.private_params = {0.0, 0.0, 0.0};
    CHECK(flatten(render(undone)).values == flatten(render(spec)).values);
}

TEST_CASE("oracle classifies clean renders and subjects accurately") {
    OracleEvaluator& oracle = shared_oracle();
    CHECK(oracle.trained());
    CHECK(oracle.heldout_accuracy() > 0.5);

    Vocabulary vocab;
    auto set = gen_pretrain_set(0, 1, vocab);
    double acc = 0.0;
    for (const auto& ex : set) {
        std::vector<ConditionToken> toks = ex.spec.attribute_tokens();
        for (auto c : ex.spec.context_tokens()) toks.push_back(c);
        acc += oracle.alignment_score({ex.image}, ex.spec.category, toks);
    }
    acc /= set.size();
    CHECK(acc > 0.5);

    // Deformed subjects still read as their category.
    for (int cat = 0; cat < 4; ++cat) {
        SubjectInstance s = make_subject(cat, 31 + cat);
        CHECK(oracle.alignment_score({s.example}, cat, {}) > 0.5);
    }
}

TEST_CASE("oracle alignment on pure noise sits near chance") {
    OracleEvaluator& oracle = shared_oracle();
    CounterRng rng(123, 0);
    std::vector<Array> noise;
    for (int i = 0; i < 64; ++i) noise.push_back(Array::vec(rng.normal_vec(256)));
    double a = oracle.alignment_score(noise, 0, {attr_token(kAttrRot45),
                                                 attr_token(kAttrThin),
                                                 attr_token(kAttrSmall)});
    // Full product of four heads: chance level 1/32.
    CHECK(a < 0.3);
    CHECK_THROWS_AS(oracle.alignment_score({}, 0, {}), std::invalid_argument);
}

TEST_CASE("fidelity is maximal against the example itself") {
    OracleEvaluator& oracle = shared_oracle();
    SubjectInstance s = make_subject(1, 3);
    CHECK(oracle.fidelity_score({s.example}, s.example) ==
          Catch::Approx(1.0).margin(1e-9));
    CounterRng rng(5, 0);
    Array noise = Array::vec(rng.normal_vec(256));
    CHECK(oracle.fidelity_score({noise}, s.example) <
          oracle.fidelity_score({s.example}, s.example));
}

TEST_CASE("an untrained oracle refuses to score") {
    OracleEvaluator oracle;
    SubjectInstance s = make_subject(0, 1);
    CHECK_THROWS_AS(oracle.alignment_score({s.example}, 0, {}), std::logic_error);
    CHECK_THROWS_AS(oracle.fidelity_score({s.example}, s.example),
                    std::logic_error);
}
