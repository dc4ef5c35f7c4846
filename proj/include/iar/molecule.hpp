#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "iar/elements.hpp"

namespace iar {

// A molecule as a raw point cloud: nuclear charges plus 3D coordinates in
// Angstrom, optionally tagged with a class label for conditional training.
struct Molecule {
    std::vector<int> atom_types;           // nuclear charges, >= 1
    std::vector<Eigen::Vector3d> coords;   // Angstrom
    std::optional<int> class_id;

    std::size_t size() const { return atom_types.size(); }
};

inline void validate_molecule(const Molecule& mol, const ElementTable& table) {
    if (mol.atom_types.empty()) throw std::runtime_error("molecule: no atoms");
    if (mol.atom_types.size() != mol.coords.size()) {
        throw std::runtime_error("molecule: types/coords length mismatch");
    }
    for (int t : mol.atom_types) {
        if (!table.has_charge(t)) {
            throw std::runtime_error("molecule: nuclear charge " + std::to_string(t) +
                                     " not in element table");
        }
    }
    for (const auto& c : mol.coords) {
        if (!c.allFinite()) throw std::runtime_error("molecule: non-finite coordinate");
    }
}

}  // namespace iar
