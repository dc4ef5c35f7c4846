#pragma once

#include <optional>
#include <string>
#include <vector>

#include "iar/georope.hpp"
#include "iar/rng.hpp"
#include "iar/tokenize.hpp"

namespace iar {

// ============================================================================
// Vocabulary
// ============================================================================

// Token ids: element types first (ascending nuclear charge), then BOS, EOS,
// NULL_CLASS, and one class token per class id.
struct Vocab {
    std::vector<int> element_charges;  // ascending
    int n_classes = 0;

    int n_elements() const { return static_cast<int>(element_charges.size()); }
    int size() const { return n_elements() + 3 + n_classes; }
    int bos() const { return n_elements(); }
    int eos() const { return n_elements() + 1; }
    int null_class() const { return n_elements() + 2; }
    int class_token(int k) const {
        if (k < 0 || k >= n_classes) throw std::runtime_error("vocab: class id out of range");
        return n_elements() + 3 + k;
    }
    bool is_element(int id) const { return id >= 0 && id < n_elements(); }

    int element_id(int charge) const {
        for (int i = 0; i < n_elements(); ++i) {
            if (element_charges[i] == charge) return i;
        }
        throw std::runtime_error("vocab: nuclear charge " + std::to_string(charge) +
                                 " out of vocabulary");
    }
    int charge_of(int id) const {
        if (!is_element(id)) throw std::runtime_error("vocab: id is not an element token");
        return element_charges[id];
    }

    static Vocab make(const ElementTable& table, int n_classes) {
        Vocab v;
        v.element_charges = table.charges();
        v.n_classes = n_classes;
        return v;
    }
};

// ============================================================================
// Configuration
// ============================================================================

struct ModelConfig {
    GeoRoPEConfig rope;
    int n_layers = 2;
    int ffn_hidden = 64;
    int denoiser_hidden = 64;
    int sigma_feats = 4;  // sin/cos pairs of log sigma
    int n_classes = 16;
    double lambda_diff = 1.0;

    int width() const { return rope.width(); }

    void validate() const {
        rope.validate();
        if (n_layers < 1 || ffn_hidden < 1 || denoiser_hidden < 1 || sigma_feats < 1) {
            throw std::runtime_error("model config: dimensions must be positive");
        }
        if (n_classes < 0) throw std::runtime_error("model config: n_classes must be >= 0");
        if (lambda_diff < 0) throw std::runtime_error("model config: lambda_diff must be >= 0");
    }
};

// Noise schedule: log-uniform sigma draws for training, log-linear
// descending grid for inference.
struct DiffusionSchedule {
    double sigma_min = 0.01;  // Angstrom
    double sigma_max = 5.0;
    int n_steps = 50;

    void validate() const {
        if (!(0 < sigma_min && sigma_min < sigma_max)) {
            throw std::runtime_error("schedule: need 0 < sigma_min < sigma_max");
        }
        if (n_steps < 1) throw std::runtime_error("schedule: n_steps must be >= 1");
    }

    double sample_sigma(Rng& rng) const {
        return sigma_min * std::exp(rng.uniform() * std::log(sigma_max / sigma_min));
    }

    std::vector<double> grid() const {
        std::vector<double> g(n_steps);
        if (n_steps == 1) {
            g[0] = sigma_max;
            return g;
        }
        for (int i = 0; i < n_steps; ++i) {
            const double f = static_cast<double>(i) / (n_steps - 1);
            g[i] = sigma_max * std::pow(sigma_min / sigma_max, f);
        }
        return g;
    }
};

struct GuidanceConfig {
    double scale = 1.0;         // s
    double label_dropout = 0.1; // p_drop

    void validate() const {
        if (scale < 0) throw std::runtime_error("guidance: scale must be >= 0");
        if (label_dropout < 0 || label_dropout >= 1) {
            throw std::runtime_error("guidance: label_dropout must be in [0,1)");
        }
    }
};

// ============================================================================
// Parameters
// ============================================================================

struct ParamRef {
    std::string name;
    double* data;
    std::ptrdiff_t size;
};

struct LayerParams {
    Eigen::MatrixXd wq_t, wk_t, wv_t, wo_t;  // d_type x d_type
    Eigen::MatrixXd wv_n, wo_n;              // m x m
    Eigen::VectorXd norm1_g, norm2_g;        // D
    Eigen::MatrixXd ffn_w1;                  // hidden x D
    Eigen::VectorXd ffn_b1;
    Eigen::MatrixXd ffn_w2;  // D x hidden
    Eigen::VectorXd ffn_b2;
};

struct DenoiserParams {
    Eigen::MatrixXd w1;  // hidden x input
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;  // hidden x hidden
    Eigen::VectorXd b2;
    Eigen::MatrixXd w3;  // 3 x hidden
    Eigen::VectorXd b3;
};

struct ModelParams {
    ModelConfig cfg;
    Vocab vocab;
    NystromBasis basis;

    Eigen::MatrixXd embedding;  // vocab x d_type
    std::vector<LayerParams> layers;
    Eigen::VectorXd final_norm_g;  // D
    Eigen::MatrixXd type_w;        // vocab x D
    Eigen::VectorXd type_b;        // vocab
    DenoiserParams den;

    int denoiser_input_dim() const {
        return 3 + 2 * cfg.sigma_feats + cfg.rope.d_type + cfg.width();
    }

    // allocate zeroed tensors with the shapes implied by cfg + vocab
    static ModelParams shaped(const ModelConfig& cfg, const Vocab& vocab) {
        cfg.validate();
        ModelParams p;
        p.cfg = cfg;
        p.vocab = vocab;
        p.basis = NystromBasis::build(cfg.rope);
        const int d = cfg.rope.d_type, m = cfg.rope.m(), w = cfg.width();
        p.embedding = Eigen::MatrixXd::Zero(vocab.size(), d);
        p.layers.resize(cfg.n_layers);
        for (auto& l : p.layers) {
            l.wq_t = Eigen::MatrixXd::Zero(d, d);
            l.wk_t = Eigen::MatrixXd::Zero(d, d);
            l.wv_t = Eigen::MatrixXd::Zero(d, d);
            l.wo_t = Eigen::MatrixXd::Zero(d, d);
            l.wv_n = Eigen::MatrixXd::Zero(m, m);
            l.wo_n = Eigen::MatrixXd::Zero(m, m);
            l.norm1_g = Eigen::VectorXd::Zero(w);
            l.norm2_g = Eigen::VectorXd::Zero(w);
            l.ffn_w1 = Eigen::MatrixXd::Zero(cfg.ffn_hidden, w);
            l.ffn_b1 = Eigen::VectorXd::Zero(cfg.ffn_hidden);
            l.ffn_w2 = Eigen::MatrixXd::Zero(w, cfg.ffn_hidden);
            l.ffn_b2 = Eigen::VectorXd::Zero(w);
        }
        p.final_norm_g = Eigen::VectorXd::Zero(w);
        p.type_w = Eigen::MatrixXd::Zero(vocab.size(), w);
        p.type_b = Eigen::VectorXd::Zero(vocab.size());
        const int din = p.denoiser_input_dim();
        p.den.w1 = Eigen::MatrixXd::Zero(cfg.denoiser_hidden, din);
        p.den.b1 = Eigen::VectorXd::Zero(cfg.denoiser_hidden);
        p.den.w2 = Eigen::MatrixXd::Zero(cfg.denoiser_hidden, cfg.denoiser_hidden);
        p.den.b2 = Eigen::VectorXd::Zero(cfg.denoiser_hidden);
        p.den.w3 = Eigen::MatrixXd::Zero(3, cfg.denoiser_hidden);
        p.den.b3 = Eigen::VectorXd::Zero(3);
        return p;
    }

    static ModelParams init(const ModelConfig& cfg, const ElementTable& table,
                            std::uint64_t seed) {
        ModelParams p = shaped(cfg, Vocab::make(table, cfg.n_classes));
        Rng rng(seed, /*stream=*/0x1a2b3c4dull);
        auto fill = [&](Eigen::MatrixXd& x) {
            const double scale = 1.0 / std::sqrt(static_cast<double>(x.cols()));
            for (int i = 0; i < x.rows(); ++i) {
                for (int j = 0; j < x.cols(); ++j) x(i, j) = scale * rng.normal();
            }
        };
        fill(p.embedding);
        p.embedding *= std::sqrt(static_cast<double>(cfg.rope.d_type)) * 0.5;
        for (auto& l : p.layers) {
            fill(l.wq_t);
            fill(l.wk_t);
            fill(l.wv_t);
            fill(l.wo_t);
            fill(l.wv_n);
            fill(l.wo_n);
            l.norm1_g.setOnes();
            l.norm2_g.setOnes();
            fill(l.ffn_w1);
            fill(l.ffn_w2);
        }
        p.final_norm_g.setOnes();
        fill(p.type_w);
        fill(p.den.w1);
        fill(p.den.w2);
        fill(p.den.w3);
        return p;
    }

    // registry in declaration order; also the checkpoint tensor order
    std::vector<ParamRef> param_refs() {
        std::vector<ParamRef> refs;
        auto add = [&](const std::string& name, Eigen::MatrixXd& m) {
            refs.push_back({name, m.data(), m.size()});
        };
        auto addv = [&](const std::string& name, Eigen::VectorXd& v) {
            refs.push_back({name, v.data(), v.size()});
        };
        add("embedding", embedding);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            add(p + "wq_t", layers[l].wq_t);
            add(p + "wk_t", layers[l].wk_t);
            add(p + "wv_t", layers[l].wv_t);
            add(p + "wo_t", layers[l].wo_t);
            add(p + "wv_n", layers[l].wv_n);
            add(p + "wo_n", layers[l].wo_n);
            addv(p + "norm1_g", layers[l].norm1_g);
            addv(p + "norm2_g", layers[l].norm2_g);
            add(p + "ffn_w1", layers[l].ffn_w1);
            addv(p + "ffn_b1", layers[l].ffn_b1);
            add(p + "ffn_w2", layers[l].ffn_w2);
            addv(p + "ffn_b2", layers[l].ffn_b2);
        }
        addv("final_norm_g", final_norm_g);
        add("type_w", type_w);
        addv("type_b", type_b);
        add("den.w1", den.w1);
        addv("den.b1", den.b1);
        add("den.w2", den.w2);
        addv("den.b2", den.b2);
        add("den.w3", den.w3);
        addv("den.b3", den.b3);
        return refs;
    }
};

// Gradient buffers with the same shapes/registry as ModelParams.
struct Grads {
    ModelParams buf;  // reuses the structure; only tensor shapes matter

    explicit Grads(const ModelParams& like) : buf(like) { zero(); }

    void zero() {
        for (auto& r : buf.param_refs()) std::fill(r.data, r.data + r.size, 0.0);
    }

    void add(Grads& other) {
        auto a = buf.param_refs();
        auto b = other.buf.param_refs();
        for (std::size_t i = 0; i < a.size(); ++i) {
            for (std::ptrdiff_t k = 0; k < a[i].size; ++k) a[i].data[k] += b[i].data[k];
        }
    }
};

// ============================================================================
// Token sequences
// ============================================================================

struct TokenInput {
    int vocab_id = 0;
    Eigen::Vector3d coord = Eigen::Vector3d::Zero();
};

// [CLASS_k | NULL_CLASS] BOS a_1 ... a_n; special tokens sit at the origin.
// `class_slot` selects the conditional layout; nullopt with class_slot=true
// emits NULL_CLASS.
inline std::vector<TokenInput> build_sequence(const CanonicalSequence& seq, bool class_slot,
                                              std::optional<int> class_id, const Vocab& vocab) {
    std::vector<TokenInput> tokens;
    tokens.reserve(seq.tokens.size() + 2);
    if (class_slot) {
        tokens.push_back({class_id ? vocab.class_token(*class_id) : vocab.null_class(),
                          Eigen::Vector3d::Zero()});
    }
    tokens.push_back({vocab.bos(), Eigen::Vector3d::Zero()});
    for (const auto& t : seq.tokens) {
        tokens.push_back({vocab.element_id(t.type), t.coord});
    }
    return tokens;
}

// row lookup into the type-embedding table
inline Eigen::VectorXd embed_type(int vocab_id, const ModelParams& p) {
    if (vocab_id < 0 || vocab_id >= p.vocab.size()) {
        throw std::runtime_error("embed_type: vocab id out of range");
    }
    return p.embedding.row(vocab_id).transpose();
}

// ============================================================================
// Backbone forward / backward
// ============================================================================

constexpr double kNormEps = 1e-8;

struct LayerCache {
    Eigen::MatrixXd x_in;            // n x D
    Eigen::MatrixXd a_norm;          // rmsnorm output
    Eigen::VectorXd rms1;            // per row
    Eigen::MatrixXd q, k, v;         // projections
    AttentionResult attn;            // weights, rotated q/k, out
    Eigen::MatrixXd o;               // after output projection
    Eigen::MatrixXd x_mid;           // x_in + o
    Eigen::MatrixXd f_norm;          // rmsnorm output
    Eigen::VectorXd rms2;
    Eigen::MatrixXd ffn_pre;         // hidden pre-activation
    Eigen::MatrixXd ffn_act;         // tanh
};

struct BackboneCache {
    std::vector<TokenInput> tokens;
    std::vector<Eigen::Vector3d> coords;
    Eigen::MatrixXd z0;
    std::vector<LayerCache> layers;
    Eigen::MatrixXd x_final;  // before final norm
    Eigen::VectorXd rms_final;
    Eigen::MatrixXd h;  // n x D
};

namespace detail {

inline void rmsnorm_rows(const Eigen::MatrixXd& x, const Eigen::VectorXd& gain,
                         Eigen::MatrixXd& out, Eigen::VectorXd& rms) {
    const int n = static_cast<int>(x.rows());
    const int d = static_cast<int>(x.cols());
    out.resize(n, d);
    rms.resize(n);
    for (int i = 0; i < n; ++i) {
        rms[i] = std::sqrt(x.row(i).squaredNorm() / d + kNormEps);
        out.row(i) = x.row(i).cwiseProduct(gain.transpose()) / rms[i];
    }
}

// gradient through y = g .* x / rms(x)
inline void rmsnorm_backward(const Eigen::MatrixXd& x, const Eigen::VectorXd& gain,
                             const Eigen::VectorXd& rms, const Eigen::MatrixXd& dy,
                             Eigen::MatrixXd& dx, Eigen::VectorXd& dgain) {
    const int n = static_cast<int>(x.rows());
    const int d = static_cast<int>(x.cols());
    dx.resize(n, d);
    for (int i = 0; i < n; ++i) {
        const Eigen::RowVectorXd gdy = dy.row(i).cwiseProduct(gain.transpose());
        const double dot = gdy.dot(x.row(i));
        dx.row(i) = gdy / rms[i] - x.row(i) * (dot / (d * rms[i] * rms[i] * rms[i]));
        dgain += dy.row(i).cwiseProduct(x.row(i) / rms[i]).transpose();
    }
}

}  // namespace detail

// Hidden embeddings h_i for a token sequence; h_i depends only on tokens <= i.
inline Eigen::MatrixXd forward_backbone(const std::vector<TokenInput>& tokens,
                                        const ModelParams& p, BackboneCache* cache = nullptr) {
    if (tokens.empty()) throw std::runtime_error("forward_backbone: empty sequence");
    const int n = static_cast<int>(tokens.size());
    const int d = p.cfg.rope.d_type, m = p.cfg.rope.m(), w = p.cfg.width();

    BackboneCache local;
    BackboneCache& c = cache ? *cache : local;
    c.tokens = tokens;
    c.coords.resize(n);
    c.z0.resize(n, w);
    for (int i = 0; i < n; ++i) {
        c.coords[i] = tokens[i].coord;
        c.z0.row(i).head(d) = p.embedding.row(tokens[i].vocab_id);
        c.z0.row(i).tail(m) = nystrom_encode(tokens[i].coord, p.basis).transpose();
    }

    Eigen::MatrixXd x = c.z0;
    c.layers.resize(p.layers.size());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const LayerParams& lp = p.layers[l];
        LayerCache& lc = c.layers[l];
        lc.x_in = x;
        detail::rmsnorm_rows(x, lp.norm1_g, lc.a_norm, lc.rms1);

        lc.q.resize(n, w);
        lc.k.resize(n, w);
        lc.v.resize(n, w);
        lc.q.leftCols(d) = lc.a_norm.leftCols(d) * lp.wq_t.transpose();
        lc.k.leftCols(d) = lc.a_norm.leftCols(d) * lp.wk_t.transpose();
        lc.v.leftCols(d) = lc.a_norm.leftCols(d) * lp.wv_t.transpose();
        lc.q.rightCols(m) = lc.a_norm.rightCols(m);  // identity block
        lc.k.rightCols(m) = lc.a_norm.rightCols(m);
        lc.v.rightCols(m) = lc.a_norm.rightCols(m) * lp.wv_n.transpose();

        lc.attn = causal_attention(lc.q, lc.k, lc.v, c.coords, p.cfg.rope);

        lc.o.resize(n, w);
        lc.o.leftCols(d) = lc.attn.out.leftCols(d) * lp.wo_t.transpose();
        lc.o.rightCols(m) = lc.attn.out.rightCols(m) * lp.wo_n.transpose();
        lc.x_mid = lc.x_in + lc.o;

        detail::rmsnorm_rows(lc.x_mid, lp.norm2_g, lc.f_norm, lc.rms2);
        lc.ffn_pre = (lc.f_norm * lp.ffn_w1.transpose()).rowwise() + lp.ffn_b1.transpose();
        lc.ffn_act = lc.ffn_pre.array().tanh();
        x = lc.x_mid + ((lc.ffn_act * lp.ffn_w2.transpose()).rowwise() + lp.ffn_b2.transpose());
    }
    c.x_final = x;
    detail::rmsnorm_rows(x, p.final_norm_g, c.h, c.rms_final);
    return c.h;
}

// Backward through the backbone given dL/dh; accumulates into grads.
inline void backbone_backward(const BackboneCache& c, const ModelParams& p,
                              const Eigen::MatrixXd& dh, Grads& grads) {
    const int n = static_cast<int>(c.tokens.size());
    const int d = p.cfg.rope.d_type, m = p.cfg.rope.m();
    const double scale = 1.0 / std::sqrt(static_cast<double>(p.cfg.width()));

    Eigen::MatrixXd dx;
    detail::rmsnorm_backward(c.x_final, p.final_norm_g, c.rms_final, dh, dx,
                             grads.buf.final_norm_g);

    for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
        const LayerParams& lp = p.layers[l];
        const LayerCache& lc = c.layers[l];
        LayerParams& gl = grads.buf.layers[l];

        // ffn branch
        const Eigen::MatrixXd df_out = dx;  // gradient on ffn output (residual add)
        gl.ffn_b2 += df_out.colwise().sum().transpose();
        gl.ffn_w2 += df_out.transpose() * lc.ffn_act;
        Eigen::MatrixXd dact = df_out * lp.ffn_w2;
        Eigen::MatrixXd dpre =
            dact.cwiseProduct((1.0 - lc.ffn_act.array().square()).matrix());
        gl.ffn_b1 += dpre.colwise().sum().transpose();
        gl.ffn_w1 += dpre.transpose() * lc.f_norm;
        Eigen::MatrixXd df_norm = dpre * lp.ffn_w1;

        Eigen::MatrixXd dx_mid;
        detail::rmsnorm_backward(lc.x_mid, lp.norm2_g, lc.rms2, df_norm, dx_mid, gl.norm2_g);
        dx_mid += dx;  // residual path

        // output projection
        const Eigen::MatrixXd& do_out = dx_mid;
        Eigen::MatrixXd dattn(n, p.cfg.width());
        gl.wo_t += do_out.leftCols(d).transpose() * lc.attn.out.leftCols(d);
        gl.wo_n += do_out.rightCols(m).transpose() * lc.attn.out.rightCols(m);
        dattn.leftCols(d) = do_out.leftCols(d) * lp.wo_t;
        dattn.rightCols(m) = do_out.rightCols(m) * lp.wo_n;

        // attention: out_i = sum_j w_ij v_j
        Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(n, p.cfg.width());
        Eigen::MatrixXd dqr = Eigen::MatrixXd::Zero(n, p.cfg.width());
        Eigen::MatrixXd dkr = Eigen::MatrixXd::Zero(n, p.cfg.width());
        for (int i = 0; i < n; ++i) {
            // dw and softmax backward, row i
            double dot = 0.0;
            Eigen::VectorXd dwrow(i + 1);
            for (int j = 0; j <= i; ++j) {
                dwrow[j] = dattn.row(i).dot(lc.v.row(j));
                dv.row(j) += lc.attn.weights(i, j) * dattn.row(i);
                dot += lc.attn.weights(i, j) * dwrow[j];
            }
            for (int j = 0; j <= i; ++j) {
                const double ds = lc.attn.weights(i, j) * (dwrow[j] - dot) * scale;
                dqr.row(i) += ds * lc.attn.k_rot.row(j);
                dkr.row(j) += ds * lc.attn.q_rot.row(i);
            }
        }
        // undo the rotary rotation on the type block (rotate by -c)
        Eigen::MatrixXd dq = dqr, dk = dkr;
        for (int i = 0; i < n; ++i) {
            auto qi = dq.row(i).head(d);
            auto ki = dk.row(i).head(d);
            rope3d_inplace(qi, -c.coords[i], p.cfg.rope);
            rope3d_inplace(ki, -c.coords[i], p.cfg.rope);
        }

        // projections back to the normed activations
        Eigen::MatrixXd da_norm(n, p.cfg.width());
        gl.wq_t += dq.leftCols(d).transpose() * lc.a_norm.leftCols(d);
        gl.wk_t += dk.leftCols(d).transpose() * lc.a_norm.leftCols(d);
        gl.wv_t += dv.leftCols(d).transpose() * lc.a_norm.leftCols(d);
        gl.wv_n += dv.rightCols(m).transpose() * lc.a_norm.rightCols(m);
        da_norm.leftCols(d) = dq.leftCols(d) * lp.wq_t + dk.leftCols(d) * lp.wk_t +
                              dv.leftCols(d) * lp.wv_t;
        da_norm.rightCols(m) = dq.rightCols(m) + dk.rightCols(m) + dv.rightCols(m) * lp.wv_n;

        Eigen::MatrixXd dx_in;
        detail::rmsnorm_backward(lc.x_in, lp.norm1_g, lc.rms1, da_norm, dx_in, gl.norm1_g);
        dx = dx_in + dx_mid;  // residual path
    }

    // embedding rows (the Nystrom part of z0 is input data)
    for (int i = 0; i < n; ++i) {
        grads.buf.embedding.row(c.tokens[i].vocab_id) += dx.row(i).head(d);
    }
}

// ============================================================================
// Type head
// ============================================================================

inline Eigen::VectorXd type_logits(const Eigen::VectorXd& h, const ModelParams& p) {
    return p.type_w * h + p.type_b;
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    const double mx = logits.maxCoeff();
    Eigen::VectorXd e = (logits.array() - mx).exp();
    return e / e.sum();
}

// -log softmax(logits)[target]
inline double type_loss_single(const Eigen::VectorXd& logits, int target) {
    const double mx = logits.maxCoeff();
    const double lse = std::log((logits.array() - mx).exp().sum()) + mx;
    return lse - logits[target];
}

// gradient of type_loss_single wrt logits: softmax - onehot
inline Eigen::VectorXd type_loss_grad(const Eigen::VectorXd& logits, int target) {
    Eigen::VectorXd g = softmax(logits);
    g[target] -= 1.0;
    return g;
}

// ============================================================================
// Denoiser
// ============================================================================

inline Eigen::VectorXd sigma_features(double sigma, int n_feats) {
    Eigen::VectorXd f(2 * n_feats);
    const double ls = std::log(sigma);
    for (int j = 0; j < n_feats; ++j) {
        const double angle = ls * std::pow(2.0, j) / 8.0;
        f[2 * j] = std::sin(angle);
        f[2 * j + 1] = std::cos(angle);
    }
    return f;
}

struct DenoiserCache {
    Eigen::VectorXd input;
    Eigen::VectorXd a1, a2;  // tanh activations
    int type_id = 0;
};

// eps_theta(c_sigma, sigma, t_next, h): three-layer tanh MLP over the noised
// coordinate, sigma features, conditioning type embedding, and context.
inline Eigen::Vector3d denoise_eps(const Eigen::Vector3d& c_sigma, double sigma, int type_id,
                                   const Eigen::VectorXd& h, const ModelParams& p,
                                   DenoiserCache* cache = nullptr) {
    DenoiserCache local;
    DenoiserCache& c = cache ? *cache : local;
    c.type_id = type_id;
    c.input.resize(p.denoiser_input_dim());
    c.input << c_sigma, sigma_features(sigma, p.cfg.sigma_feats),
        p.embedding.row(type_id).transpose(), h;
    c.a1 = (p.den.w1 * c.input + p.den.b1).array().tanh();
    c.a2 = (p.den.w2 * c.a1 + p.den.b2).array().tanh();
    return p.den.w3 * c.a2 + p.den.b3;
}

// Backward for ||eps - eps_hat||^2 style upstream gradient on eps_hat;
// accumulates parameter grads and returns the gradient on the context h.
inline Eigen::VectorXd denoiser_backward(const DenoiserCache& c, const ModelParams& p,
                                         const Eigen::Vector3d& dout, Grads& grads) {
    grads.buf.den.b3 += dout;
    grads.buf.den.w3 += dout * c.a2.transpose();
    Eigen::VectorXd da2 = p.den.w3.transpose() * dout;
    Eigen::VectorXd dpre2 = da2.cwiseProduct((1.0 - c.a2.array().square()).matrix());
    grads.buf.den.b2 += dpre2;
    grads.buf.den.w2 += dpre2 * c.a1.transpose();
    Eigen::VectorXd da1 = p.den.w2.transpose() * dpre2;
    Eigen::VectorXd dpre1 = da1.cwiseProduct((1.0 - c.a1.array().square()).matrix());
    grads.buf.den.b1 += dpre1;
    grads.buf.den.w1 += dpre1 * c.input.transpose();
    Eigen::VectorXd din = p.den.w1.transpose() * dpre1;

    const int d = p.cfg.rope.d_type;
    const int emb_off = 3 + 2 * p.cfg.sigma_feats;
    grads.buf.embedding.row(c.type_id) += din.segment(emb_off, d).transpose();
    return din.tail(p.cfg.width());
}

// squared noise-prediction error for one position
inline double diffusion_loss_single(const Eigen::Vector3d& eps, const Eigen::Vector3d& eps_hat) {
    return (eps - eps_hat).squaredNorm();
}

// ============================================================================
// Joint loss over one sequence
// ============================================================================

// per-position noise draw used by the diffusion loss
struct NoiseDraw {
    double sigma = 1.0;
    Eigen::Vector3d eps = Eigen::Vector3d::Zero();
};

struct SequenceExample {
    std::vector<TokenInput> tokens;  // prefix + atoms
    int prefix_len = 1;              // 1 (BOS) or 2 (class slot + BOS)
};

struct SequenceLoss {
    double loss_type = 0.0;   // summed over supervised positions
    double loss_diff = 0.0;   // summed over coordinate positions
    int type_positions = 0;
    int diff_positions = 0;
};

// Forward + loss + (optionally) backward for one sequence. Loss values are
// position sums with counts; gradients are of
//   w_type * sum(type losses) + w_diff * sum(diffusion losses),
// so the trainer passes w_type = 1/N_type and w_diff = lambda/N_diff for its
// batch-mean objective.
inline SequenceLoss sequence_loss(const SequenceExample& ex, const ModelParams& p,
                                  const std::vector<NoiseDraw>& draws, Grads* grads,
                                  double w_type = 1.0, double w_diff = 1.0) {
    const int t = static_cast<int>(ex.tokens.size());
    const int first = ex.prefix_len - 1;  // BOS position
    SequenceLoss out;

    BackboneCache cache;
    const Eigen::MatrixXd h = forward_backbone(ex.tokens, p, &cache);
    Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(h.rows(), h.cols());

    std::vector<DenoiserCache> dcaches;
    std::vector<Eigen::Vector3d> ddiff;
    int draw_idx = 0;
    for (int pos = first; pos < t; ++pos) {
        const Eigen::VectorXd hp = h.row(pos).transpose();
        const int target = pos + 1 < t ? ex.tokens[pos + 1].vocab_id : p.vocab.eos();
        const Eigen::VectorXd logits = type_logits(hp, p);
        out.loss_type += type_loss_single(logits, target);
        ++out.type_positions;
        if (grads) {
            const Eigen::VectorXd dlogits = w_type * type_loss_grad(logits, target);
            grads->buf.type_b += dlogits;
            grads->buf.type_w += dlogits * hp.transpose();
            dh.row(pos) += (p.type_w.transpose() * dlogits).transpose();
        }
        if (pos + 1 < t) {
            const NoiseDraw& nd = draws.at(draw_idx++);
            const Eigen::Vector3d c_true = ex.tokens[pos + 1].coord;
            const Eigen::Vector3d c_noised = c_true + nd.sigma * nd.eps;
            DenoiserCache dc;
            const Eigen::Vector3d eps_hat =
                denoise_eps(c_noised, nd.sigma, ex.tokens[pos + 1].vocab_id, hp, p, &dc);
            out.loss_diff += diffusion_loss_single(nd.eps, eps_hat);
            ++out.diff_positions;
            if (grads) {
                dcaches.push_back(dc);
                ddiff.push_back(w_diff * 2.0 * (eps_hat - nd.eps));
            }
        }
    }
    if (grads) {
        int k = 0;
        for (int pos = first; pos < t - 1; ++pos) {
            const Eigen::VectorXd dh_den = denoiser_backward(dcaches[k], p, ddiff[k], *grads);
            dh.row(pos) += dh_den.transpose();
            ++k;
        }
        backbone_backward(cache, p, dh, *grads);
    }
    return out;
}

}  // namespace iar
