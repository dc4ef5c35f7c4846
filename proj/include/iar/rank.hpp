#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <vector>

#include "iar/bonds.hpp"

namespace iar {

// Canonical atom ranks (1..n) for a molecule in canonical pose.
struct CanonicalRank {
    std::vector<int> rank;  // per original atom index, 1-based
    int refinement_rounds = 0;
    int tie_breaks = 0;
};

namespace detail {

// Refine classes: new key = (own class, sorted neighbor classes); distinct
// keys sorted ascending keep the previous class order while splitting.
// Returns the number of classes.
inline int refine_classes(const BondGraph& g, std::vector<int>& cls, int* rounds) {
    const int n = g.n;
    int n_classes = 1 + *std::max_element(cls.begin(), cls.end());
    while (true) {
        std::vector<std::vector<int>> keys(n);
        for (int i = 0; i < n; ++i) {
            std::vector<int> nbr;
            nbr.reserve(g.adj[i].size());
            for (const auto& [j, o] : g.adj[i]) nbr.push_back(cls[j] * 4 + o);
            std::sort(nbr.begin(), nbr.end());
            keys[i].push_back(cls[i]);
            keys[i].insert(keys[i].end(), nbr.begin(), nbr.end());
        }
        std::map<std::vector<int>, int> ids;
        for (int i = 0; i < n; ++i) ids.emplace(keys[i], 0);
        int next = 0;
        for (auto& [key, id] : ids) id = next++;
        if (rounds) ++*rounds;
        if (next == n_classes) {
            // same class count: partition is stable (splits only)
            break;
        }
        for (int i = 0; i < n; ++i) cls[i] = ids.at(keys[i]);
        n_classes = next;
    }
    return n_classes;
}

}  // namespace detail

// Iterative invariant refinement over the bond graph. Initial invariant:
// (nuclear charge, degree, attached hydrogens, ring membership), ordered so
// heavier and more-connected atoms rank first. Remaining ties are broken by
// promoting the atom with the lexicographically smallest (sorted neighbor
// ranks, coordinate triple rounded to 1e-4) and re-refining until discrete.
inline CanonicalRank canonical_rank(const BondGraph& graph, const Molecule& posed) {
    const int n = graph.n;
    CanonicalRank result;
    result.rank.assign(n, 0);

    const std::vector<bool> in_ring = graph.ring_membership();
    std::vector<std::array<int, 4>> init(n);
    for (int i = 0; i < n; ++i) {
        int h = 0;
        for (const auto& [j, o] : graph.adj[i]) {
            if (posed.atom_types[j] == 1) ++h;
        }
        init[i] = {posed.atom_types[i], graph.degree(i), h, in_ring[i] ? 1 : 0};
    }
    // descending initial order: highest charge first
    std::map<std::array<int, 4>, int, std::greater<>> initial_ids;
    for (int i = 0; i < n; ++i) initial_ids.emplace(init[i], 0);
    {
        int next = 0;
        for (auto& [key, id] : initial_ids) id = next++;
    }
    std::vector<int> cls(n);
    for (int i = 0; i < n; ++i) cls[i] = initial_ids.at(init[i]);

    int n_classes = detail::refine_classes(graph, cls, &result.refinement_rounds);

    auto rounded = [&](int i) {
        std::array<std::int64_t, 3> r;
        for (int k = 0; k < 3; ++k) r[k] = std::llround(posed.coords[i][k] * 1e4);
        return r;
    };

    while (n_classes < n) {
        // smallest (earliest-ranked) class with more than one member
        int tie_class = -1;
        std::vector<int> members;
        for (int c = 0; c < n_classes && tie_class == -1; ++c) {
            members.clear();
            for (int i = 0; i < n; ++i) {
                if (cls[i] == c) members.push_back(i);
            }
            if (members.size() > 1) tie_class = c;
        }
        // promote the lexicographically smallest member
        int pick = -1;
        std::pair<std::vector<int>, std::array<std::int64_t, 3>> pick_key;
        for (int i : members) {
            std::vector<int> nbr;
            for (const auto& [j, o] : graph.adj[i]) nbr.push_back(cls[j]);
            std::sort(nbr.begin(), nbr.end());
            auto key = std::make_pair(std::move(nbr), rounded(i));
            if (pick == -1 || key < pick_key) {
                pick = i;
                pick_key = std::move(key);
            }
        }
        for (int i = 0; i < n; ++i) {
            if (cls[i] > tie_class || (cls[i] == tie_class && i != pick)) ++cls[i];
        }
        ++n_classes;
        ++result.tie_breaks;
        n_classes = detail::refine_classes(graph, cls, &result.refinement_rounds);
    }

    for (int i = 0; i < n; ++i) result.rank[i] = cls[i] + 1;
    return result;
}

}  // namespace iar
