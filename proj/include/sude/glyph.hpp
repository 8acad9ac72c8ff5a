#pragma once

// Parametric glyph dataset: four shape families with public attributes
// (rotation, thickness, size), a background context, and per-subject private
// deformations (two notch marks plus an aspect perturbation). Rendering is a
// deterministic pure function of the spec.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sude/array.hpp"
#include "sude/rng.hpp"
#include "sude/tokens.hpp"

namespace sude {

constexpr int kGlyphRes = 16;
constexpr int kGlyphPixels = kGlyphRes * kGlyphRes;

enum class GlyphCategory : int { Disc = 0, Cross = 1, Bar = 2, Ring = 3 };

inline const char* category_name(int c) {
    switch (c) {
        case 0: return "disc";
        case 1: return "cross";
        case 2: return "bar";
        case 3: return "ring";
    }
    return "?";
}

// Attribute token ids (one token per attribute value).
enum AttrId {
    kAttrRot0 = 0,
    kAttrRot45 = 1,
    kAttrThin = 2,
    kAttrThick = 3,
    kAttrSmall = 4,
    kAttrLarge = 5,
};
enum CtxId { kCtxDark = 0, kCtxLight = 1 };

inline ConditionToken attr_token(int id) {
    return ConditionToken{TokenKind::Attribute, id};
}
inline ConditionToken ctx_token(int id) {
    return ConditionToken{TokenKind::Context, id};
}
inline ConditionToken cat_token(int id) {
    return ConditionToken{TokenKind::Category, id};
}
inline ConditionToken subj_token(int id) {
    return ConditionToken{TokenKind::Subject, id};
}

struct GlyphSpec {
    int category = 0;        // disc | cross | bar | ring
    bool rot45 = false;
    bool thick = true;
    bool large = true;
    bool light_bg = false;
    // {notch angle 1, notch angle 2, aspect perturbation}; all-zero means the
    // category-default shape with no deformation.
    std::array<double, 3> private_params{0.0, 0.0, 0.0};

    bool deformed() const {
        return private_params[0] != 0.0 || private_params[1] != 0.0 ||
               private_params[2] != 0.0;
    }

    std::vector<ConditionToken> attribute_tokens() const {
        return {attr_token(rot45 ? kAttrRot45 : kAttrRot0),
                attr_token(thick ? kAttrThick : kAttrThin),
                attr_token(large ? kAttrLarge : kAttrSmall)};
    }
    std::vector<ConditionToken> context_tokens() const {
        return {ctx_token(light_bg ? kCtxLight : kCtxDark)};
    }
};

namespace glyph_detail {

inline double shape_sdf(int category, double x, double y, double radius,
                        double width) {
    double r = std::hypot(x, y);
    switch (category) {
        case 0:  // disc with a diametric slot: the slot makes orientation
                 // visible and its width exposes the thickness parameter
            return std::max(r - radius, -(std::abs(y) - width));
        case 1: {  // cross: union of two axis-aligned bars
            double h = std::max(std::abs(x) - radius, std::abs(y) - width);
            double v = std::max(std::abs(y) - radius, std::abs(x) - width);
            return std::min(h, v);
        }
        case 2:  // bar
            return std::max(std::abs(x) - radius, std::abs(y) - width);
        case 3: {  // open ring: a band with a gap, so its orientation is visible
            double mid = radius - width;
            double band = std::abs(r - mid) - width;
            double gap = std::max(x - 0.35 * mid, std::abs(y) - 0.6 * mid);
            return std::max(band, -gap);
        }
    }
    throw std::invalid_argument("render: unknown category");
}

}  // namespace glyph_detail

// Deterministic grayscale render in [-1, 1].
inline Array render(const GlyphSpec& spec) {
    double radius = spec.large ? 0.70 : 0.45;
    double width = spec.thick ? 0.19 : 0.07;
    double bg = spec.light_bg ? -0.40 : -1.0;
    double theta = spec.rot45 ? 0.25 * 3.14159265358979323846 : 0.0;
    double ct = std::cos(theta), st = std::sin(theta);
    double aspect = 1.0 + spec.private_params[2];
    const double edge = 0.18;  // linear anti-alias ramp, ~1.4 px

    // Notch marks in the shape-local frame so they rotate with the glyph.
    bool deformed = spec.deformed();
    double n1x = 0.45 * std::cos(spec.private_params[0]);
    double n1y = 0.45 * std::sin(spec.private_params[0]);
    double n2x = 0.45 * std::cos(spec.private_params[1]);
    double n2y = 0.45 * std::sin(spec.private_params[1]);
    const double notch_sigma = 0.15;

    Array img = Array::zeros({kGlyphRes, kGlyphRes});
    for (int row = 0; row < kGlyphRes; ++row) {
        double py = (row + 0.5) / kGlyphRes * 2.0 - 1.0;
        for (int col = 0; col < kGlyphRes; ++col) {
            double px = (col + 0.5) / kGlyphRes * 2.0 - 1.0;
            // Inverse rotation, then inverse aspect, gives shape-local coords.
            double lx = (ct * px + st * py) / aspect;
            double ly = (-st * px + ct * py) * aspect;
            double d = glyph_detail::shape_sdf(spec.category, lx, ly, radius, width);
            double a = std::clamp(0.5 - d / edge, 0.0, 1.0);
            double v = bg + (1.0 - bg) * a;
            if (deformed) {
                double g1 = std::exp(-((lx - n1x) * (lx - n1x) +
                                       (ly - n1y) * (ly - n1y)) /
                                     (2.0 * notch_sigma * notch_sigma));
                double g2 = std::exp(-((lx - n2x) * (lx - n2x) +
                                       (ly - n2y) * (ly - n2y)) /
                                     (2.0 * notch_sigma * notch_sigma));
                // Local sign flip: a dent on the glyph, a dot on background.
                v *= (1.0 - 2.0 * std::clamp(g1 + g2, 0.0, 1.0));
            }
            img.values[static_cast<std::size_t>(row) * kGlyphRes + col] = v;
        }
    }
    return img;
}

inline Array flatten(Array img) {
    img.shape = {static_cast<std::size_t>(img.size())};
    return img;
}

struct GlyphExample {
    GlyphSpec spec;
    Condition cond;
    Array image;  // flattened, d_x = 256
};

// All (category x attributes x context) cells with category-default shapes;
// no subject token appears anywhere in the pretraining conditions.
inline std::vector<GlyphExample> gen_pretrain_set(std::uint64_t /*seed*/,
                                                  int per_condition,
                                                  const Vocabulary& vocab) {
    if (per_condition < 1)
        throw std::invalid_argument("gen_pretrain_set: per_condition >= 1");
    std::vector<GlyphExample> out;
    for (int cat = 0; cat < vocab.n_categories; ++cat)
        for (int rot = 0; rot < 2; ++rot)
            for (int th = 0; th < 2; ++th)
                for (int sz = 0; sz < 2; ++sz)
                    for (int bgc = 0; bgc < 2; ++bgc) {
                        GlyphSpec spec;
                        spec.category = cat;
                        spec.rot45 = rot == 1;
                        spec.thick = th == 1;
                        spec.large = sz == 1;
                        spec.light_bg = bgc == 1;
                        GlyphExample ex;
                        ex.spec = spec;
                        ex.cond = category_condition(cat, vocab,
                                                     spec.attribute_tokens(),
                                                     spec.context_tokens());
                        ex.image = flatten(render(spec));
                        for (int k = 0; k < per_condition; ++k)
                            out.push_back(ex);
                    }
    return out;
}

struct SubjectInstance {
    int category = 0;
    GlyphSpec hidden_spec;  // evaluation ground truth only
    Array example;          // the single fine-tuning image, flattened
};

// One-shot subject: seeded private deformation rendered under a fixed
// attribute setting (rotation 0, thick, large, dark background), so every
// other attribute value is guaranteed absent from the example.
inline SubjectInstance make_subject(int category, std::uint64_t seed) {
    if (category < 0 || category > 3)
        throw std::invalid_argument("make_subject: bad category");
    CounterRng rng(seed, 0x676c797068ULL);
    GlyphSpec spec;
    spec.category = category;
    spec.rot45 = false;
    spec.thick = true;
    spec.large = true;
    spec.light_bg = false;
    double two_pi = 6.283185307179586;
    spec.private_params[0] = 0.2 + rng.next_uniform() * (two_pi - 0.4);
    spec.private_params[1] = 0.2 + rng.next_uniform() * (two_pi - 0.4);
    spec.private_params[2] = -0.15 + 0.30 * rng.next_uniform();
    SubjectInstance s;
    s.category = category;
    s.hidden_spec = spec;
    s.example = flatten(render(spec));
    return s;
}

}  // namespace sude
