#pragma once

#include <string>
#include <vector>

#include "iar/metrics.hpp"
#include "iar/rng.hpp"

namespace iar {

struct MoleculeTemplate {
    std::string name;
    Molecule mol;
};

namespace detail {

inline Molecule make_mol(std::initializer_list<std::pair<int, std::array<double, 3>>> atoms) {
    Molecule m;
    for (const auto& [z, c] : atoms) {
        m.atom_types.push_back(z);
        m.coords.emplace_back(c[0], c[1], c[2]);
    }
    return m;
}

}  // namespace detail

// Equilibrium-geometry templates. Bond distances sit far enough from every
// order threshold that the +-0.02 A synthesis jitter can never change the
// inferred graph, so all instances stay fully stable.
inline const std::vector<MoleculeTemplate>& synth_templates() {
    using detail::make_mol;
    static const std::vector<MoleculeTemplate> templates = {
        {"water", make_mol({
            {8, {0.0000000000, 0.0000000000, 0.0000000000}},
            {1, {0.7569503273, 0.5858822766, 0.0000000000}},
            {1, {-0.7569503273, 0.5858822766, 0.0000000000}},
        })},
        {"methane", make_mol({
            {6, {0.0000000000, 0.0000000000, 0.0000000000}},
            {1, {0.6275797426, 0.6275797426, 0.6275797426}},
            {1, {0.6275797426, -0.6275797426, -0.6275797426}},
            {1, {-0.6275797426, 0.6275797426, -0.6275797426}},
            {1, {-0.6275797426, -0.6275797426, 0.6275797426}},
        })},
        {"ethanol", make_mol({
            {6, {0.0000000000, 0.0000000000, 0.0000000000}},
            {6, {1.5120000000, 0.0000000000, 0.0000000000}},
            {8, {1.0697966810, 1.3609618748, 0.0000000000}},
            {1, {2.0347599368, 1.3525407681, 0.0000000000}},
            {1, {0.3633114398, -1.0276695956, 0.0000000000}},
            {1, {0.3633114398, 0.5138347978, 0.8899879765}},
            {1, {0.3633114398, 0.5138347978, -0.8899879765}},
            {1, {1.1486885602, -0.5138347978, -0.8899879765}},
            {1, {1.1486885602, -0.5138347978, 0.8899879765}},
        })},
        {"co2", make_mol({
            {6, {0.0000000000, 0.0000000000, 0.0000000000}},
            {8, {1.2050000000, 0.0000000000, 0.0000000000}},
            {8, {-1.2050000000, 0.0000000000, 0.0000000000}},
        })},
        {"methylamine", make_mol({
            {6, {0.0000000000, 0.0000000000, 0.0000000000}},
            {7, {1.4710000000, 0.0000000000, 0.0000000000}},
            {1, {1.1255596552, 0.9490895470, 0.0000000000}},
            {1, {1.1255596552, -0.4745447735, -0.8219356582}},
            {1, {0.3548692884, 0.5153076237, 0.8925389858}},
            {1, {0.3548692884, -1.0306152474, 0.0000000000}},
            {1, {0.3548692884, 0.5153076237, -0.8925389858}},
        })},
        {"dimethyl_ether", make_mol({
            {8, {0.0000000000, 0.0000000000, 0.0000000000}},
            {6, {1.1668747851, 0.7915195739, 0.0000000000}},
            {6, {-1.1668747851, 0.7915195739, 0.0000000000}},
            {1, {1.4370253384, -0.2644722246, 0.0000000000}},
            {1, {0.5822058610, 0.9957206080, -0.8969750202}},
            {1, {0.5822058610, 0.9957206080, 0.8969750202}},
            {1, {-1.4370253384, -0.2644722246, 0.0000000000}},
            {1, {-0.5822058610, 0.9957206080, 0.8969750202}},
            {1, {-0.5822058610, 0.9957206080, -0.8969750202}},
        })},
        {"dimethylamine", make_mol({
            {7, {0.0000000000, 0.0000000000, 0.0000000000}},
            {6, {1.2106242092, 0.8196542101, 0.0000000000}},
            {6, {-1.2106242092, 0.8196542101, 0.0000000000}},
            {1, {0.4973089598, -0.1509799213, 0.8660189732}},
            {1, {1.4850288987, -0.2346304924, -0.0358585078}},
            {1, {0.6126498233, 1.0538680175, -0.8807215941}},
            {1, {0.6478159689, 1.0019278375, 0.9154906932}},
            {1, {-1.4850288987, -0.2346304924, 0.0358585078}},
            {1, {-0.6126498233, 1.0538680175, 0.8807215941}},
            {1, {-0.6478159689, 1.0019278375, -0.9154906932}},
        })},
    };
    return templates;
}

constexpr double kSynthJitter = 0.02;  // Angstrom, uniform per coordinate

// Deterministic desk-scale dataset: templates cycled in order, each instance
// jittered and labeled with its functional-group class id.
inline std::vector<Molecule> synth_dataset(std::uint64_t seed, int count,
                                           const ElementTable& table,
                                           const PatternTable& patterns = PatternTable::builtin()) {
    if (count < 1) throw std::runtime_error("synth_dataset: count must be >= 1");
    const auto& templates = synth_templates();
    Rng rng(seed, /*stream=*/0x5d47eb1cull);
    std::vector<Molecule> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        Molecule m = templates[i % templates.size()].mol;
        for (auto& c : m.coords) {
            for (int k = 0; k < 3; ++k) c[k] += rng.uniform(-kSynthJitter, kSynthJitter);
        }
        m.class_id = class_label(m, table, patterns);
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace iar
