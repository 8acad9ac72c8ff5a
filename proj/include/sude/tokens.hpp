#pragma once

// Token vocabulary and condition composition. A condition is a multiset of
// tokens; its embedding is the arithmetic mean of the member token rows, so
// the prompt-template analogs P2/P3 act by duplicate-weighting tokens.

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sude {

enum class TokenKind { Category, Subject, Attribute, Context, Null };

struct ConditionToken {
    TokenKind kind = TokenKind::Null;
    int id = 0;  // index within the kind's vocabulary

    bool operator==(const ConditionToken&) const = default;
};

enum class Template { P0, P1, P2, P3 };

inline Template template_from_string(const std::string& s) {
    if (s == "P0") return Template::P0;
    if (s == "P1") return Template::P1;
    if (s == "P2") return Template::P2;
    if (s == "P3") return Template::P3;
    throw std::invalid_argument("unknown template: " + s);
}

inline std::string to_string(Template t) {
    switch (t) {
        case Template::P0: return "P0";
        case Template::P1: return "P1";
        case Template::P2: return "P2";
        case Template::P3: return "P3";
    }
    return "?";
}

// Fixed vocabulary layout: one embedding row per token, addressed as
// [null][categories][attributes][contexts][subjects].
struct Vocabulary {
    int n_categories = 4;
    int n_attributes = 6;  // rot0, rot45, thin, thick, small, large
    int n_contexts = 2;    // dark, light
    int n_subjects = 8;

    int rows() const {
        return 1 + n_categories + n_attributes + n_contexts + n_subjects;
    }

    int row_of(ConditionToken t) const {
        switch (t.kind) {
            case TokenKind::Null:
                check(t.id, 1, "null");
                return 0;
            case TokenKind::Category:
                check(t.id, n_categories, "category");
                return 1 + t.id;
            case TokenKind::Attribute:
                check(t.id, n_attributes, "attribute");
                return 1 + n_categories + t.id;
            case TokenKind::Context:
                check(t.id, n_contexts, "context");
                return 1 + n_categories + n_attributes + t.id;
            case TokenKind::Subject:
                check(t.id, n_subjects, "subject");
                return 1 + n_categories + n_attributes + n_contexts + t.id;
        }
        throw std::invalid_argument("bad token kind");
    }

private:
    static void check(int id, int n, const char* kind) {
        if (id < 0 || id >= n)
            throw std::invalid_argument(std::string("unknown ") + kind +
                                        " token id " + std::to_string(id));
    }
};

// A composed condition: the token multiset (sorted for canonical form).
struct Condition {
    std::vector<ConditionToken> tokens;

    bool is_null() const {
        return tokens.size() == 1 && tokens[0].kind == TokenKind::Null;
    }
};

inline Condition null_condition() {
    return Condition{{ConditionToken{TokenKind::Null, 0}}};
}

inline void canonicalize(std::vector<ConditionToken>& ts) {
    std::sort(ts.begin(), ts.end(), [](ConditionToken a, ConditionToken b) {
        if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
        return a.id < b.id;
    });
}

inline Condition compose(std::optional<ConditionToken> subject,
                         std::optional<ConditionToken> category,
                         const std::vector<ConditionToken>& attributes,
                         const std::vector<ConditionToken>& context,
                         Template tpl) {
    std::vector<ConditionToken> ts;
    if (subject) {
        if (subject->kind != TokenKind::Subject)
            throw std::invalid_argument("compose: subject slot wants a subject token");
        ts.push_back(*subject);
    }
    for (auto a : attributes) {
        if (a.kind != TokenKind::Attribute)
            throw std::invalid_argument("compose: attribute slot wants attribute tokens");
        ts.push_back(a);
    }
    for (auto c : context) {
        if (c.kind != TokenKind::Context)
            throw std::invalid_argument("compose: context slot wants context tokens");
        ts.push_back(c);
    }
    bool with_category = tpl != Template::P0 && category.has_value();
    if (with_category) {
        if (category->kind != TokenKind::Category)
            throw std::invalid_argument("compose: category slot wants a category token");
        ts.push_back(*category);
        if (tpl == Template::P2 || tpl == Template::P3) ts.push_back(*category);
        if (tpl == Template::P3)
            for (auto a : attributes) ts.push_back(a);
    }
    if (ts.empty()) return null_condition();
    canonicalize(ts);
    return Condition{std::move(ts)};
}

// Condition for a plain category cell (pretraining data, category prompts).
inline Condition category_condition(int category, const Vocabulary&,
                                    const std::vector<ConditionToken>& attributes = {},
                                    const std::vector<ConditionToken>& context = {}) {
    return compose(std::nullopt, ConditionToken{TokenKind::Category, category},
                   attributes, context, Template::P1);
}

}  // namespace sude
