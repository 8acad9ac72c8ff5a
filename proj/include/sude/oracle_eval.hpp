#pragma once

// The scoring oracle: a small multi-head classifier trained on rendered
// glyphs. Classification heads cover the category and every attribute axis
// plus the background; a private-parameter regression head keeps subject
// identity in the shared features, which the fidelity metric relies on.
// Pure-noise inputs are trained toward uniform head outputs so that chance
// inputs score at chance.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sude/array.hpp"
#include "sude/glyph.hpp"
#include "sude/rng.hpp"

namespace sude {

struct OracleHeads {
    std::vector<double> p_category;    // 4
    std::vector<double> p_rotation;    // 2 (rot0, rot45)
    std::vector<double> p_thickness;   // 2 (thin, thick)
    std::vector<double> p_size;        // 2 (small, large)
    std::vector<double> p_background;  // 2 (dark, light)
};

class OracleEvaluator {
public:
    static constexpr int kFeatureDim = 64;

    OracleEvaluator() = default;

    bool trained() const { return trained_; }

    void train(std::uint64_t seed, int n_samples = 8000, int epochs = 40);

    // Shared trunk features (penultimate layer), given a flattened image.
    std::vector<double> features(const Array& image) const {
        require_trained();
        return trunk(image.values);
    }

    OracleHeads heads(const Array& image) const {
        require_trained();
        std::vector<double> f = trunk(image.values);
        OracleHeads h;
        h.p_category = softmax(head_logits("cat", f));
        h.p_rotation = softmax(head_logits("rot", f));
        h.p_thickness = softmax(head_logits("thk", f));
        h.p_size = softmax(head_logits("siz", f));
        h.p_background = softmax(head_logits("bgc", f));
        return h;
    }

    // Mean over images of the product of the requested head probabilities.
    // `category` < 0 skips the category factor; attribute/context token ids
    // select which axis factors participate.
    double alignment_score(const std::vector<Array>& images, int category,
                           const std::vector<ConditionToken>& attributes) const {
        require_trained();
        if (images.empty()) throw std::invalid_argument("alignment_score: no images");
        double acc = 0.0;
        for (const Array& im : images) {
            OracleHeads h = heads(im);
            double p = category >= 0 ? h.p_category[category] : 1.0;
            for (auto tok : attributes) {
                if (tok.kind == TokenKind::Attribute) {
                    switch (tok.id) {
                        case kAttrRot0: p *= h.p_rotation[0]; break;
                        case kAttrRot45: p *= h.p_rotation[1]; break;
                        case kAttrThin: p *= h.p_thickness[0]; break;
                        case kAttrThick: p *= h.p_thickness[1]; break;
                        case kAttrSmall: p *= h.p_size[0]; break;
                        case kAttrLarge: p *= h.p_size[1]; break;
                        default: throw std::invalid_argument("bad attribute id");
                    }
                } else if (tok.kind == TokenKind::Context) {
                    p *= h.p_background[tok.id == kCtxLight ? 1 : 0];
                } else {
                    throw std::invalid_argument(
                        "alignment_score: attribute/context tokens only");
                }
            }
            acc += p;
        }
        return acc / static_cast<double>(images.size());
    }

    // Mean feature cosine similarity to the example, mapped to [0, 1].
    double fidelity_score(const std::vector<Array>& images,
                          const Array& example) const {
        require_trained();
        if (images.empty()) throw std::invalid_argument("fidelity_score: no images");
        std::vector<double> fe = features(example);
        double acc = 0.0;
        for (const Array& im : images)
            acc += cosine(features(im), fe);
        return 0.5 * (acc / static_cast<double>(images.size())) + 0.5;
    }

    double heldout_accuracy() const { return heldout_accuracy_; }

private:
    static std::vector<double> softmax(std::vector<double> z) {
        double mx = z[0];
        for (double v : z) mx = std::max(mx, v);
        double s = 0.0;
        for (double& v : z) {
            v = std::exp(v - mx);
            s += v;
        }
        for (double& v : z) v /= s;
        return z;
    }

    static double cosine(const std::vector<double>& a,
                         const std::vector<double>& b) {
        double ab = 0.0, aa = 0.0, bb = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            ab += a[i] * b[i];
            aa += a[i] * a[i];
            bb += b[i] * b[i];
        }
        double d = std::sqrt(aa) * std::sqrt(bb);
        return d > 0.0 ? ab / d : 0.0;
    }

    static std::vector<double> affine_tanh(const Array& w, const Array& b,
                                           const std::vector<double>& x) {
        std::size_t m = w.shape[0], n = w.shape[1];
        std::vector<double> out(m);
        for (std::size_t i = 0; i < m; ++i) {
            const double* row = w.values.data() + i * n;
            double acc = b.values[i];
            for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
            out[i] = std::tanh(acc);
        }
        return out;
    }

    std::vector<double> trunk(const std::vector<double>& x) const {
        std::vector<double> h = affine_tanh(params_.at("trunk/W1"),
                                            params_.at("trunk/b1"), x);
        return affine_tanh(params_.at("trunk/W2"), params_.at("trunk/b2"), h);
    }

    std::vector<double> head_logits(const std::string& name,
                                    const std::vector<double>& f) const {
        const Array& w = params_.at("head/" + name + "/W");
        const Array& b = params_.at("head/" + name + "/b");
        std::size_t m = w.shape[0], n = w.shape[1];
        std::vector<double> out(m);
        for (std::size_t i = 0; i < m; ++i) {
            const double* row = w.values.data() + i * n;
            double acc = b.values[i];
            for (std::size_t j = 0; j < n; ++j) acc += row[j] * f[j];
            out[i] = acc;
        }
        return out;
    }

    void require_trained() const {
        if (!trained_)
            throw std::logic_error("OracleEvaluator: not trained");
    }

    std::map<std::string, Array> params_;
    bool trained_ = false;
    double heldout_accuracy_ = 0.0;

    friend struct OracleTrainer;
};

// Training detail, split out to keep the evaluator surface small.
struct OracleTrainer {
    struct Sample {
        std::vector<double> input;  // noise-augmented training input
        std::vector<double> clean;  // un-augmented render (empty for noise)
        int cat = 0, rot = 0, thk = 0, siz = 0, bgc = 0;
        bool is_noise = false;
        std::array<double, 5> priv{};  // (cos f1, sin f1, cos f2, sin f2, 4a)
    };

    static Sample draw(CounterRng& rng) {
        Sample s;
        if (rng.next_uniform() < 0.15) {
            // Unstructured inputs carry uniform targets so the heads stay
            // near chance off the render manifold; half the draws use large
            // amplitudes to cover degenerate generator outputs too.
            s.is_noise = true;
            s.input.resize(kGlyphPixels);
            double scale = 1.0;
            if (rng.next_uniform() < 0.5)
                scale = std::exp(std::log(2.0) +
                                 rng.next_uniform() * (std::log(400.0) - std::log(2.0)));
            for (double& v : s.input)
                v = scale == 1.0 ? std::clamp(rng.next_normal(), -1.0, 1.0)
                                 : scale * rng.next_normal();
            return s;
        }
        GlyphSpec spec;
        spec.category = static_cast<int>(rng.next_in(0, 3));
        spec.rot45 = rng.next_uniform() < 0.5;
        spec.thick = rng.next_uniform() < 0.5;
        spec.large = rng.next_uniform() < 0.5;
        spec.light_bg = rng.next_uniform() < 0.5;
        if (rng.next_uniform() < 0.6) {
            double two_pi = 6.283185307179586;
            spec.private_params[0] = 0.2 + rng.next_uniform() * (two_pi - 0.4);
            spec.private_params[1] = 0.2 + rng.next_uniform() * (two_pi - 0.4);
            spec.private_params[2] = -0.15 + 0.30 * rng.next_uniform();
            s.priv = {std::cos(spec.private_params[0]),
                      std::sin(spec.private_params[0]),
                      std::cos(spec.private_params[1]),
                      std::sin(spec.private_params[1]),
                      4.0 * spec.private_params[2]};
        }
        s.cat = spec.category;
        s.rot = spec.rot45 ? 1 : 0;
        s.thk = spec.thick ? 1 : 0;
        s.siz = spec.large ? 1 : 0;
        s.bgc = spec.light_bg ? 1 : 0;
        Array img = flatten(render(spec));
        s.clean = img.values;
        double noise_std = 0.15 * rng.next_uniform();
        s.input = img.values;
        for (double& v : s.input) v += noise_std * rng.next_normal();
        return s;
    }

    // Cross-entropy against a one-hot (or uniform, for noise) target.
    static Var ce(Tape& tape, Var logits, int target, int k, bool uniform) {
        Var lse = tape.log_sum_exp(logits);
        if (uniform) {
            Var mean = tape.scale(tape.sum(logits), 1.0 / k);
            return tape.sub(lse, mean);
        }
        std::vector<double> onehot(k, 0.0);
        onehot[target] = 1.0;
        Var pick = tape.sum(tape.mul(logits, tape.constant(Array::vec(onehot))));
        return tape.sub(lse, pick);
    }
};

inline void OracleEvaluator::train(std::uint64_t seed, int n_samples,
                                   int epochs) {
    CounterRng init(seed, 0x6f7261636c65ULL);
    auto init_mat = [&](std::size_t m, std::size_t n) {
        Array a = Array::zeros({m, n});
        double s = 1.0 / std::sqrt(static_cast<double>(n));
        for (double& v : a.values) v = s * init.next_normal();
        return a;
    };
    constexpr std::size_t kHidden = 256;
    params_.clear();
    params_["trunk/W1"] = init_mat(kHidden, kGlyphPixels);
    params_["trunk/b1"] = Array::zeros({kHidden});
    params_["trunk/W2"] = init_mat(kFeatureDim, kHidden);
    params_["trunk/b2"] = Array::zeros({kFeatureDim});
    const std::vector<std::pair<std::string, int>> head_dims = {
        {"cat", 4}, {"rot", 2}, {"thk", 2}, {"siz", 2}, {"bgc", 2}, {"prv", 5}};
    for (const auto& [name, k] : head_dims) {
        params_["head/" + name + "/W"] =
            init_mat(static_cast<std::size_t>(k), kFeatureDim);
        params_["head/" + name + "/b"] = Array::zeros({static_cast<std::size_t>(k)});
    }

    CounterRng data_rng(seed, 0x64617461ULL);
    std::vector<OracleTrainer::Sample> train_set, test_set;
    for (int i = 0; i < n_samples; ++i) train_set.push_back(OracleTrainer::draw(data_rng));
    for (int i = 0; i < 800; ++i) test_set.push_back(OracleTrainer::draw(data_rng));

    std::map<std::string, Array> momentum;
    for (const auto& [k, v] : params_) momentum[k] = Array::zeros(v.shape);

    const double mu = 0.9;
    const int batch = 32;
    Tape tape;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        double lr = epoch < 2 * epochs / 3 ? 0.05 : 0.01;
        for (std::size_t off = 0; off < train_set.size();
             off += static_cast<std::size_t>(batch)) {
            std::size_t end = std::min(train_set.size(), off + batch);
            tape.reset();
            std::map<std::string, Var> vars;
            for (const auto& [k, v] : params_) vars[k] = tape.leaf(v, true);
            Var loss;
            for (std::size_t i = off; i < end; ++i) {
                const auto& s = train_set[i];
                Var x = tape.constant(Array::vec(s.input));
                Var h = tape.tanh(tape.add(tape.matvec(vars["trunk/W1"], x),
                                           vars["trunk/b1"]));
                Var f = tape.tanh(tape.add(tape.matvec(vars["trunk/W2"], h),
                                           vars["trunk/b2"]));
                auto logits = [&](const std::string& n) {
                    return tape.add(tape.matvec(vars["head/" + n + "/W"], f),
                                    vars["head/" + n + "/b"]);
                };
                Var l = OracleTrainer::ce(tape, logits("cat"), s.cat, 4, s.is_noise);
                l = tape.add(l, OracleTrainer::ce(tape, logits("rot"), s.rot, 2, s.is_noise));
                l = tape.add(l, OracleTrainer::ce(tape, logits("thk"), s.thk, 2, s.is_noise));
                l = tape.add(l, OracleTrainer::ce(tape, logits("siz"), s.siz, 2, s.is_noise));
                l = tape.add(l, OracleTrainer::ce(tape, logits("bgc"), s.bgc, 2, s.is_noise));
                if (!s.is_noise) {
                    Var pr = logits("prv");
                    Var target = tape.constant(Array::vec(
                        {s.priv[0], s.priv[1], s.priv[2], s.priv[3], s.priv[4]}));
                    l = tape.add(l, tape.scale(tape.mse(pr, target), 0.5));
                }
                loss = loss.valid() ? tape.add(loss, l) : l;
            }
            loss = tape.scale(loss, 1.0 / static_cast<double>(end - off));
            tape.backward(loss);
            for (auto& [k, v] : params_) {
                Array g = tape.grad(vars[k]);
                Array& m = momentum[k];
                for (std::size_t j = 0; j < v.size(); ++j) {
                    m.values[j] = mu * m.values[j] + g.values[j];
                    v.values[j] -= lr * m.values[j];
                }
            }
        }
    }
    trained_ = true;

    // Held-out accuracy: every classification head must be right, on
    // non-noise samples.
    int correct = 0, total = 0;
    for (const auto& s : test_set) {
        if (s.is_noise) continue;
        ++total;
        OracleHeads h = heads(Array::vec(s.clean));
        auto amax = [](const std::vector<double>& p) {
            return static_cast<int>(std::max_element(p.begin(), p.end()) -
                                    p.begin());
        };
        if (amax(h.p_category) == s.cat && amax(h.p_rotation) == s.rot &&
            amax(h.p_thickness) == s.thk && amax(h.p_size) == s.siz &&
            amax(h.p_background) == s.bgc)
            ++correct;
    }
    heldout_accuracy_ = total ? static_cast<double>(correct) / total : 0.0;
}

}  // namespace sude
