#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace iar {

// Configuration of the geometry-aware attention ingredients: type-embedding
// width and rotary frequency ladder, plus the anchor set and RBF bandwidth
// of the distance encoding.
struct GeoRoPEConfig {
    int d_type = 24;                          // divisible by 6
    double rope_base = 100.0;                 // theta_t = base^(-t/n_freq), rad/Angstrom
    std::vector<Eigen::Vector3d> anchors;
    double rbf_bandwidth = 1.5;               // sigma_k, Angstrom
    double chol_jitter = 1e-8;                // added to the anchor Gram diagonal

    int n_freq() const { return d_type / 6; }
    int m() const { return static_cast<int>(anchors.size()); }
    int width() const { return d_type + m(); }

    std::vector<double> freqs() const {
        std::vector<double> f(n_freq());
        for (int t = 0; t < n_freq(); ++t) {
            f[t] = std::pow(rope_base, -static_cast<double>(t) / n_freq());
        }
        return f;
    }

    void validate() const {
        if (d_type <= 0 || d_type % 6 != 0) {
            throw std::runtime_error("georope: d_type must be a positive multiple of 6");
        }
        if (rope_base <= 1.0) throw std::runtime_error("georope: rope_base must be > 1");
        if (anchors.empty()) throw std::runtime_error("georope: need at least one anchor");
        for (std::size_t i = 0; i < anchors.size(); ++i) {
            for (std::size_t j = i + 1; j < anchors.size(); ++j) {
                if ((anchors[i] - anchors[j]).norm() < 1e-12) {
                    throw std::runtime_error("georope: anchors must be pairwise distinct");
                }
            }
        }
        if (rbf_bandwidth <= 0) throw std::runtime_error("georope: rbf_bandwidth must be > 0");
        if (chol_jitter < 0) throw std::runtime_error("georope: chol_jitter must be >= 0");
    }
};

inline double rbf(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double sigma) {
    return std::exp(-(a - b).squaredNorm() / (2.0 * sigma * sigma));
}

// ============================================================================
// Anchor placement
// ============================================================================

// Deterministic anchor sequence: the corners of the box first, then
// farthest-point selection over the remaining base^3 lattice points.
// Prefixes of the sequence are themselves well-spread anchor sets.
inline std::vector<Eigen::Vector3d> anchor_sequence(const Eigen::Vector3d& lo,
                                                    const Eigen::Vector3d& hi, int base,
                                                    int count) {
    if (base < 2) throw std::runtime_error("anchor_sequence: lattice base must be >= 2");
    if (count < 1 || count > base * base * base) {
        throw std::runtime_error("anchor_sequence: count out of range");
    }
    std::vector<Eigen::Vector3d> pts;
    for (int ix = 0; ix < base; ++ix) {
        for (int iy = 0; iy < base; ++iy) {
            for (int iz = 0; iz < base; ++iz) {
                Eigen::Vector3d p;
                p.x() = lo.x() + (hi.x() - lo.x()) * ix / (base - 1);
                p.y() = lo.y() + (hi.y() - lo.y()) * iy / (base - 1);
                p.z() = lo.z() + (hi.z() - lo.z()) * iz / (base - 1);
                pts.push_back(p);
            }
        }
    }
    auto lex_less = [](const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
        for (int k = 0; k < 3; ++k) {
            if (a[k] != b[k]) return a[k] < b[k];
        }
        return false;
    };
    std::vector<int> chosen;
    std::vector<bool> used(pts.size(), false);
    auto is_corner = [&](const Eigen::Vector3d& p) {
        for (int k = 0; k < 3; ++k) {
            if (p[k] != lo[k] && p[k] != hi[k]) return false;
        }
        return true;
    };
    std::vector<int> corners;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (is_corner(pts[i])) corners.push_back(static_cast<int>(i));
    }
    std::sort(corners.begin(), corners.end(),
              [&](int a, int b) { return lex_less(pts[a], pts[b]); });
    for (int c : corners) {
        if (static_cast<int>(chosen.size()) < count) {
            chosen.push_back(c);
            used[c] = true;
        }
    }
    std::vector<double> dmin(pts.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (int c : chosen) dmin[i] = std::min(dmin[i], (pts[i] - pts[c]).norm());
    }
    while (static_cast<int>(chosen.size()) < count) {
        int best = -1;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (used[i]) continue;
            if (best == -1 || dmin[i] > dmin[best] + 1e-9 ||
                (std::abs(dmin[i] - dmin[best]) <= 1e-9 && lex_less(pts[i], pts[best]))) {
                best = static_cast<int>(i);
            }
        }
        chosen.push_back(best);
        used[best] = true;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            dmin[i] = std::min(dmin[i], (pts[i] - pts[best]).norm());
        }
    }
    std::vector<Eigen::Vector3d> out;
    out.reserve(count);
    for (int c : chosen) out.push_back(pts[c]);
    return out;
}

// ============================================================================
// Nystrom encoding
// ============================================================================

// Cholesky factor of the anchor Gram matrix A (+ jitter on the diagonal).
struct NystromBasis {
    Eigen::MatrixXd L;  // lower triangular
    std::vector<Eigen::Vector3d> anchors;
    double sigma = 1.5;
    double jitter = 0.0;

    static NystromBasis build(const std::vector<Eigen::Vector3d>& anchors, double sigma,
                              double jitter) {
        const int m = static_cast<int>(anchors.size());
        Eigen::MatrixXd a(m, m);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) a(i, j) = rbf(anchors[i], anchors[j], sigma);
        }
        a.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() != Eigen::Success) {
            throw std::runtime_error("nystrom: anchor Gram matrix is not positive definite");
        }
        NystromBasis basis;
        basis.L = llt.matrixL();
        basis.anchors = anchors;
        basis.sigma = sigma;
        basis.jitter = jitter;
        return basis;
    }

    static NystromBasis build(const GeoRoPEConfig& cfg) {
        return build(cfg.anchors, cfg.rbf_bandwidth, cfg.chol_jitter);
    }

    int m() const { return static_cast<int>(anchors.size()); }
};

// z = L^{-1} k(c) with k_a = RBF(c, anchor_a); inner products of encodings
// approximate the RBF of the pairwise distance.
inline Eigen::VectorXd nystrom_encode(const Eigen::Vector3d& c, const NystromBasis& basis) {
    Eigen::VectorXd k(basis.m());
    for (int a = 0; a < basis.m(); ++a) k[a] = rbf(c, basis.anchors[a], basis.sigma);
    basis.L.triangularView<Eigen::Lower>().solveInPlace(k);
    return k;
}

// ============================================================================
// RoPE-3D
// ============================================================================

// Rotate consecutive dimension pairs by the coordinate-scaled frequency
// ladder: block t of 6 dims uses angles (x, y, z) * theta_t on its three
// pairs. Norm-preserving; inner products of rotated vectors depend on
// coordinates only through their difference.
template <typename Derived>
inline void rope3d_inplace(Eigen::MatrixBase<Derived>& v, const Eigen::Vector3d& c,
                           const GeoRoPEConfig& cfg) {
    if (v.size() != cfg.d_type) throw std::runtime_error("rope3d: width mismatch");
    const auto freqs = cfg.freqs();
    for (int t = 0; t < cfg.n_freq(); ++t) {
        const int base = 6 * t;
        for (int axis = 0; axis < 3; ++axis) {
            const double angle = c[axis] * freqs[t];
            const double cs = std::cos(angle), sn = std::sin(angle);
            const int i = base + 2 * axis;
            const double a = v(i), b = v(i + 1);
            v(i) = a * cs - b * sn;
            v(i + 1) = a * sn + b * cs;
        }
    }
}

inline Eigen::VectorXd rope3d_apply(const Eigen::VectorXd& v, const Eigen::Vector3d& c,
                                    const GeoRoPEConfig& cfg) {
    Eigen::VectorXd out = v;
    rope3d_inplace(out, c, cfg);
    return out;
}

// ============================================================================
// Block-diagonal projection and attention score
// ============================================================================

// q/k projections act on the type block only (Nystrom block passes through
// the identity); v projects both blocks.
inline void project_qkv(const Eigen::VectorXd& z, const Eigen::MatrixXd& wq_type,
                        const Eigen::MatrixXd& wk_type, const Eigen::MatrixXd& wv_type,
                        const Eigen::MatrixXd& wv_nys, Eigen::VectorXd& q, Eigen::VectorXd& k,
                        Eigen::VectorXd& v) {
    const int d = static_cast<int>(wq_type.rows());
    const int m = static_cast<int>(z.size()) - d;
    if (m < 0 || wq_type.cols() != d || wv_nys.rows() != m || wv_nys.cols() != m) {
        throw std::runtime_error("project_qkv: shape mismatch");
    }
    q.resize(z.size());
    k.resize(z.size());
    v.resize(z.size());
    q.head(d) = wq_type * z.head(d);
    k.head(d) = wk_type * z.head(d);
    v.head(d) = wv_type * z.head(d);
    q.tail(m) = z.tail(m);
    k.tail(m) = z.tail(m);
    v.tail(m) = wv_nys * z.tail(m);
}

// the two terms of the decomposed score: rotary (relative position) and
// Nystrom (pairwise distance)
inline std::pair<double, double> attention_score_terms(const Eigen::VectorXd& q,
                                                       const Eigen::VectorXd& k,
                                                       const Eigen::Vector3d& ci,
                                                       const Eigen::Vector3d& cj,
                                                       const GeoRoPEConfig& cfg) {
    const int d = cfg.d_type;
    const Eigen::VectorXd qr = rope3d_apply(q.head(d), ci, cfg);
    const Eigen::VectorXd kr = rope3d_apply(k.head(d), cj, cfg);
    const double rope_term = qr.dot(kr);
    const double nys_term = q.tail(q.size() - d).dot(k.tail(k.size() - d));
    return {rope_term, nys_term};
}

inline double attention_score(const Eigen::VectorXd& q, const Eigen::VectorXd& k,
                              const Eigen::Vector3d& ci, const Eigen::Vector3d& cj,
                              const GeoRoPEConfig& cfg) {
    const auto [rope_term, nys_term] = attention_score_terms(q, k, ci, cj, cfg);
    return (rope_term + nys_term) / std::sqrt(static_cast<double>(cfg.width()));
}

// ============================================================================
// Causal attention
// ============================================================================

struct AttentionResult {
    Eigen::MatrixXd out;      // n x D
    Eigen::MatrixXd weights;  // n x n, row i zero beyond column i
    Eigen::MatrixXd q_rot;    // n x D, rotary applied to the type block
    Eigen::MatrixXd k_rot;    // n x D
};

// Masked softmax attention over decomposed scores; position i attends to
// positions <= i.
inline AttentionResult causal_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                                        const Eigen::MatrixXd& v,
                                        const std::vector<Eigen::Vector3d>& coords,
                                        const GeoRoPEConfig& cfg) {
    const int n = static_cast<int>(q.rows());
    const int d = cfg.d_type;
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.width()));
    AttentionResult r;
    r.q_rot = q;
    r.k_rot = k;
    for (int i = 0; i < n; ++i) {
        auto qi = r.q_rot.row(i).head(d);
        auto ki = r.k_rot.row(i).head(d);
        rope3d_inplace(qi, coords[i], cfg);
        rope3d_inplace(ki, coords[i], cfg);
    }
    r.weights = Eigen::MatrixXd::Zero(n, n);
    r.out = Eigen::MatrixXd::Zero(n, v.cols());
    for (int i = 0; i < n; ++i) {
        double maxs = -std::numeric_limits<double>::infinity();
        for (int j = 0; j <= i; ++j) {
            const double s = r.q_rot.row(i).dot(r.k_rot.row(j)) * scale;
            r.weights(i, j) = s;
            maxs = std::max(maxs, s);
        }
        double denom = 0.0;
        for (int j = 0; j <= i; ++j) {
            r.weights(i, j) = std::exp(r.weights(i, j) - maxs);
            denom += r.weights(i, j);
        }
        for (int j = 0; j <= i; ++j) {
            r.weights(i, j) /= denom;
            r.out.row(i) += r.weights(i, j) * v.row(j);
        }
    }
    return r;
}

}  // namespace iar
