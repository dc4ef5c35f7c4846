#pragma once

#include <numeric>
#include <vector>

#include "iar/frame.hpp"
#include "iar/rank.hpp"

namespace iar {

struct AtomToken {
    int type = 0;                                    // nuclear charge
    Eigen::Vector3d coord = Eigen::Vector3d::Zero();  // canonical frame, Angstrom
};

// The canonical token sequence: pose-aligned coordinates, atoms ordered by
// canonical rank. Invariant to SE(3) transforms and index permutations of
// the input (up to the symmetry subgroup for degenerate molecules).
struct CanonicalSequence {
    std::vector<AtomToken> tokens;
    InertialFrame frame;
    std::vector<int> order;  // order[k] = original index of the k-th token
    CanonicalRank ranks;     // per original atom index
    std::optional<int> class_id;

    bool pose_fallback() const { return frame.sign_fallback; }
    bool degenerate() const { return frame.degenerate; }
};

inline CanonicalSequence tokenize(const Molecule& mol, const ElementTable& table) {
    validate_molecule(mol, table);
    CanonicalSequence seq;
    auto [posed, frame] = canonical_pose(mol);
    seq.frame = frame;
    seq.class_id = mol.class_id;
    const BondGraph graph = infer_bonds(posed, table);
    seq.ranks = canonical_rank(graph, posed);

    const int n = static_cast<int>(mol.size());
    seq.order.resize(n);
    for (int i = 0; i < n; ++i) seq.order[seq.ranks.rank[i] - 1] = i;
    seq.tokens.reserve(n);
    for (int k = 0; k < n; ++k) {
        seq.tokens.push_back({posed.atom_types[seq.order[k]], posed.coords[seq.order[k]]});
    }
    return seq;
}

// Rebuild a molecule from a token sequence (coordinates stay canonical).
inline Molecule to_molecule(const CanonicalSequence& seq) {
    Molecule mol;
    mol.class_id = seq.class_id;
    for (const auto& t : seq.tokens) {
        mol.atom_types.push_back(t.type);
        mol.coords.push_back(t.coord);
    }
    return mol;
}

}  // namespace iar
