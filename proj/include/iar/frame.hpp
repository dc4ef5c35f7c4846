#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "iar/molecule.hpp"

namespace iar {

// Tolerances of the canonicalization pipeline.
struct CanonTolerances {
    static constexpr double tau_plane = 1e-6;      // off-plane anchor threshold (Angstrom)
    static constexpr double eigen_tie_rel = 1e-6;  // eigenvalue tie, relative to max |lambda|
    static constexpr double ortho = 1e-9;          // orthogonality / determinant check
};

struct NoValidAnchor : std::runtime_error {
    NoValidAnchor() : std::runtime_error("no atom lies off both the y-z and x-z planes") {}
};

// Canonical pose frame. `rotation` holds the canonical axes as columns in
// world coordinates; canonical coordinates are rotation^T * (x - center).
struct InertialFrame {
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d eigenvalues = Eigen::Vector3d::Zero();  // descending
    std::vector<std::vector<int>> degenerate_groups;        // partition of {0,1,2}
    bool degenerate = false;      // some group has size > 1
    bool sign_fallback = false;   // quadrant fix replaced by per-axis rule
};

inline Eigen::Vector3d centroid(const Molecule& mol) {
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (const auto& p : mol.coords) c += p;
    return c / static_cast<double>(mol.size());
}

// I = sum_i (|c_i|^2 * Id - c_i c_i^T) over centered coordinates; unweighted.
inline Eigen::Matrix3d inertia_tensor(const std::vector<Eigen::Vector3d>& centered) {
    Eigen::Matrix3d t = Eigen::Matrix3d::Zero();
    for (const auto& c : centered) {
        t += c.squaredNorm() * Eigen::Matrix3d::Identity() - c * c.transpose();
    }
    return t;
}

// Eigendecomposition with eigenvalues sorted descending and ties grouped at
// relative tolerance eigen_tie_rel * max|lambda|. A zero tensor yields the
// identity basis with full degeneracy.
inline void eigen_frame(const Eigen::Matrix3d& tensor, Eigen::Vector3d& evals,
                        Eigen::Matrix3d& evecs, std::vector<std::vector<int>>& groups) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(tensor);
    if (solver.info() != Eigen::Success) throw std::runtime_error("eigen_frame: solver failed");
    // solver returns ascending order; flip to descending
    for (int i = 0; i < 3; ++i) {
        evals[i] = solver.eigenvalues()[2 - i];
        evecs.col(i) = solver.eigenvectors().col(2 - i);
    }
    const double scale = std::abs(evals[0]);
    if (scale < 1e-30) {
        evals.setZero();
        evecs.setIdentity();
        groups = {{0, 1, 2}};
        return;
    }
    const double tol = CanonTolerances::eigen_tie_rel * scale;
    groups.clear();
    groups.push_back({0});
    for (int i = 1; i < 3; ++i) {
        if (evals[i - 1] - evals[i] <= tol) {
            groups.back().push_back(i);
        } else {
            groups.push_back({i});
        }
    }
}

namespace detail {

inline bool lex_less(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    for (int k = 0; k < 3; ++k) {
        if (a[k] != b[k]) return a[k] < b[k];
    }
    return false;
}

// Deterministic, permutation-invariant "best atom" selection: maximize
// (score, charge), break exact ties by lexicographically smallest centered
// coordinate (exact ties only occur in symmetric molecules, where every
// choice yields an equivalent frame).
inline int select_atom(const std::vector<Eigen::Vector3d>& centered, const std::vector<int>& types,
                       const std::vector<double>& score, double threshold) {
    int best = -1;
    for (std::size_t i = 0; i < centered.size(); ++i) {
        if (score[i] <= threshold) continue;
        if (best == -1 || score[i] > score[best] ||
            (score[i] == score[best] && types[i] > types[best]) ||
            (score[i] == score[best] && types[i] == types[best] &&
             lex_less(centered[i], centered[best]))) {
            best = static_cast<int>(i);
        }
    }
    return best;
}

// Orient a degenerate eigen-subspace so its first basis vector points at the
// in-subspace projection of the best-projecting atom. Atoms projecting to
// ~zero everywhere leave the solver basis untouched (their canonical
// coordinates in the subspace are ~zero regardless of orientation).
inline void orient_subspace(Eigen::Matrix3d& evecs, const std::vector<int>& group,
                            const std::vector<Eigen::Vector3d>& centered,
                            const std::vector<int>& types) {
    const std::size_t n = centered.size();
    if (group.size() == 2) {
        const Eigen::Vector3d u = evecs.col(group[0]);
        const Eigen::Vector3d v = evecs.col(group[1]);
        std::vector<double> score(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double a = u.dot(centered[i]), b = v.dot(centered[i]);
            score[i] = std::sqrt(a * a + b * b);
        }
        const int pick = select_atom(centered, types, score, CanonTolerances::tau_plane);
        if (pick < 0) return;
        const Eigen::Vector3d p = u.dot(centered[pick]) * u + v.dot(centered[pick]) * v;
        const Eigen::Vector3d first = p.normalized();
        // complete the subspace basis with the normal of the group's plane
        const int other = 3 - group[0] - group[1];
        evecs.col(group[0]) = first;
        evecs.col(group[1]) = evecs.col(other).cross(first).normalized();
    } else if (group.size() == 3) {
        std::vector<double> score(n);
        for (std::size_t i = 0; i < n; ++i) score[i] = centered[i].norm();
        const int a1 = select_atom(centered, types, score, CanonTolerances::tau_plane);
        if (a1 < 0) return;  // all atoms at the origin
        const Eigen::Vector3d x = centered[a1].normalized();
        std::vector<double> perp(n);
        for (std::size_t i = 0; i < n; ++i) {
            perp[i] = (centered[i] - x.dot(centered[i]) * x).norm();
        }
        const int a2 = select_atom(centered, types, perp, CanonTolerances::tau_plane);
        Eigen::Vector3d y;
        if (a2 >= 0) {
            y = (centered[a2] - x.dot(centered[a2]) * x).normalized();
        } else {
            // collinear cloud: any perpendicular completes the basis
            const Eigen::Vector3d seed =
                std::abs(x.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
            y = (seed - x.dot(seed) * x).normalized();
        }
        evecs.col(0) = x;
        evecs.col(1) = y;
        evecs.col(2) = x.cross(y);
    }
}

}  // namespace detail

// Resolve axis signs with the off-plane anchor: among atoms whose projections
// on both candidate x- and y-axes exceed tau_plane, take the farthest from the
// origin and flip axes so its (x, y) projection lands in the first quadrant;
// the z sign then restores det = +1. Throws NoValidAnchor when no atom leaves
// both planes.
inline Eigen::Matrix3d fix_axis_signs(const Eigen::Matrix3d& eigvecs,
                                      const std::vector<Eigen::Vector3d>& centered,
                                      const std::vector<int>& types) {
    Eigen::Matrix3d v = eigvecs;
    if (v.determinant() < 0) v.col(2) *= -1.0;

    const std::size_t n = centered.size();
    std::vector<double> score(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double px = std::abs(v.col(0).dot(centered[i]));
        const double py = std::abs(v.col(1).dot(centered[i]));
        if (px > CanonTolerances::tau_plane && py > CanonTolerances::tau_plane) {
            score[i] = centered[i].norm();
        }
    }
    const int anchor = detail::select_atom(centered, types, score, CanonTolerances::tau_plane);
    if (anchor < 0) throw NoValidAnchor();

    const double sx = v.col(0).dot(centered[anchor]) >= 0 ? 1.0 : -1.0;
    const double sy = v.col(1).dot(centered[anchor]) >= 0 ? 1.0 : -1.0;
    Eigen::Matrix3d r;
    r.col(0) = sx * v.col(0);
    r.col(1) = sy * v.col(1);
    r.col(2) = sx * sy * v.col(2);
    return r;
}

namespace detail {

// Fallback when no off-plane anchor exists (linear molecules, planar
// molecules whose plane contains the first axis): each axis sign is set so
// the best atom in (charge, distance, |projection|) order projects
// non-negatively; axes with no projecting atom soak up the det = +1 parity
// fix, which cannot change any atom coordinate there.
inline Eigen::Matrix3d per_axis_signs(const Eigen::Matrix3d& eigvecs,
                                      const std::vector<Eigen::Vector3d>& centered,
                                      const std::vector<int>& types) {
    Eigen::Matrix3d v = eigvecs;
    if (v.determinant() < 0) v.col(2) *= -1.0;
    const std::size_t n = centered.size();
    double sign[3] = {1.0, 1.0, 1.0};
    bool constrained[3] = {false, false, false};
    for (int k = 0; k < 3; ++k) {
        int best = -1;
        double bestp = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double p = v.col(k).dot(centered[i]);
            if (std::abs(p) <= CanonTolerances::tau_plane) continue;
            const bool better =
                best == -1 || types[i] > types[best] ||
                (types[i] == types[best] && centered[i].norm() > centered[best].norm() + 1e-12) ||
                (types[i] == types[best] &&
                 std::abs(centered[i].norm() - centered[best].norm()) <= 1e-12 &&
                 std::abs(p) > std::abs(bestp) + 1e-12) ||
                (types[i] == types[best] &&
                 std::abs(centered[i].norm() - centered[best].norm()) <= 1e-12 &&
                 std::abs(std::abs(p) - std::abs(bestp)) <= 1e-12 && p > bestp);
            if (better) {
                best = static_cast<int>(i);
                bestp = p;
            }
        }
        if (best >= 0) {
            sign[k] = bestp >= 0 ? 1.0 : -1.0;
            constrained[k] = true;
        }
    }
    if (sign[0] * sign[1] * sign[2] < 0) {
        int flip = 2;
        for (int k = 2; k >= 0; --k) {
            if (!constrained[k]) {
                flip = k;
                break;
            }
        }
        sign[flip] *= -1.0;
    }
    Eigen::Matrix3d r;
    for (int k = 0; k < 3; ++k) r.col(k) = sign[k] * v.col(k);
    return r;
}

}  // namespace detail

// Align a molecule to its inertial frame: center, eigen-sort the inertia
// tensor, orient degenerate subspaces, and fix axis signs via the anchor
// atom (or the per-axis fallback).
inline std::pair<Molecule, InertialFrame> canonical_pose(const Molecule& mol) {
    InertialFrame frame;
    frame.center = centroid(mol);
    std::vector<Eigen::Vector3d> centered(mol.size());
    for (std::size_t i = 0; i < mol.size(); ++i) centered[i] = mol.coords[i] - frame.center;

    Eigen::Matrix3d evecs;
    eigen_frame(inertia_tensor(centered), frame.eigenvalues, evecs, frame.degenerate_groups);
    for (const auto& g : frame.degenerate_groups) {
        if (g.size() > 1) {
            frame.degenerate = true;
            detail::orient_subspace(evecs, g, centered, mol.atom_types);
        }
    }

    try {
        frame.rotation = fix_axis_signs(evecs, centered, mol.atom_types);
    } catch (const NoValidAnchor&) {
        frame.rotation = detail::per_axis_signs(evecs, centered, mol.atom_types);
        frame.sign_fallback = true;
    }

    Molecule posed = mol;
    for (std::size_t i = 0; i < mol.size(); ++i) {
        posed.coords[i] = frame.rotation.transpose() * centered[i];
    }
    return {std::move(posed), std::move(frame)};
}

}  // namespace iar
