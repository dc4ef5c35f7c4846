#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "iar/tokenize.hpp"

namespace iar {

// ============================================================================
// Stability and validity
// ============================================================================

// Fraction of atoms whose bond-order sum is an allowed valence.
inline double atom_stability(const Molecule& mol, const BondGraph& g, const ElementTable& table) {
    int stable = 0;
    for (int i = 0; i < g.n; ++i) {
        if (table.allowed_valence(mol.atom_types[i], g.valence_sum(i))) ++stable;
    }
    return static_cast<double>(stable) / static_cast<double>(g.n);
}

inline bool molecule_is_stable(const Molecule& mol, const BondGraph& g, const ElementTable& table) {
    return atom_stability(mol, g, table) == 1.0;
}

// Fraction of molecules whose atoms are all stable.
inline double molecule_stability(const std::vector<Molecule>& mols,
                                 const std::vector<BondGraph>& graphs,
                                 const ElementTable& table) {
    int stable = 0;
    for (std::size_t i = 0; i < mols.size(); ++i) {
        if (molecule_is_stable(mols[i], graphs[i], table)) ++stable;
    }
    return static_cast<double>(stable) / static_cast<double>(mols.size());
}

// Valid when every atom has 1 <= valence sum <= its max allowed valence and
// the bond graph is connected.
inline bool validity(const Molecule& mol, const BondGraph& g, const ElementTable& table) {
    for (int i = 0; i < g.n; ++i) {
        const int v = g.valence_sum(i);
        if (v < 1 || v > table.max_valence(mol.atom_types[i])) return false;
    }
    return g.connected();
}

// ============================================================================
// Graph-level identity (uniqueness)
// ============================================================================

// Canonical graph key: atom types in canonical order plus the bond list
// mapped through the canonical ranks. Coordinates are dropped, so conformers
// and rigidly transformed copies of one molecule collapse to the same key.
inline std::string graph_key(const Molecule& mol, const ElementTable& table) {
    const CanonicalSequence seq = tokenize(mol, table);
    const Molecule posed = to_molecule(seq);
    const BondGraph g = infer_bonds(posed, table);
    std::ostringstream key;
    for (const auto& t : seq.tokens) key << t.type << ",";
    key << "|";
    std::vector<std::array<int, 3>> edges;
    for (const auto& e : g.edges) {
        edges.push_back({std::min(e.a, e.b), std::max(e.a, e.b), e.order});
    }
    std::sort(edges.begin(), edges.end());
    for (const auto& e : edges) key << e[0] << "-" << e[1] << ":" << e[2] << ",";
    return key.str();
}

// Unique fraction among the valid molecules (0 when none are valid).
inline double uniqueness(const std::vector<Molecule>& mols, const ElementTable& table) {
    std::set<std::string> keys;
    int valid = 0;
    for (const auto& m : mols) {
        const BondGraph g = infer_bonds(m, table);
        if (!validity(m, g, table)) continue;
        ++valid;
        keys.insert(graph_key(m, table));
    }
    if (valid == 0) return 0.0;
    return static_cast<double>(keys.size()) / static_cast<double>(valid);
}

// ============================================================================
// Functional groups and class patterns
// ============================================================================

struct ClassPattern {
    bool hydroxyl = false;    // O bonded to exactly one C and one H
    bool ether = false;       // O bonded to exactly two C, both single bonds
    bool amine2 = false;      // N with exactly two C neighbors and one H
    bool hetero_ring = false; // simple 5- or 6-cycle containing N or O

    std::string bits() const {
        std::string s;
        for (bool b : {hydroxyl, ether, amine2, hetero_ring}) s += b ? 'T' : 'F';
        return s;
    }
};

namespace detail {

// existence of a simple cycle of length 5 or 6 through `start`
inline bool on_small_cycle(const BondGraph& g, int start) {
    std::vector<bool> visited(g.n, false);
    std::function<bool(int, int)> dfs = [&](int u, int depth) {
        if (depth > 6) return false;
        visited[u] = true;
        for (const auto& [v, o] : g.adj[u]) {
            if (v == start && depth >= 5) return true;
            if (!visited[v] && depth < 6) {
                if (dfs(v, depth + 1)) return true;
            }
        }
        visited[u] = false;
        return false;
    };
    return dfs(start, 1);
}

}  // namespace detail

inline ClassPattern detect_functional_groups(const Molecule& mol, const BondGraph& g) {
    ClassPattern p;
    for (int i = 0; i < g.n; ++i) {
        const int z = mol.atom_types[i];
        if (z == 8) {
            int c = 0, h = 0, other = 0, c_single = 0;
            for (const auto& [j, o] : g.adj[i]) {
                const int zj = mol.atom_types[j];
                if (zj == 6) {
                    ++c;
                    if (o == 1) ++c_single;
                } else if (zj == 1) {
                    ++h;
                } else {
                    ++other;
                }
            }
            if (c == 1 && h == 1 && other == 0) p.hydroxyl = true;
            if (c == 2 && c_single == 2 && h == 0 && other == 0) p.ether = true;
        } else if (z == 7) {
            int c = 0, h = 0, other = 0;
            for (const auto& [j, o] : g.adj[i]) {
                const int zj = mol.atom_types[j];
                if (zj == 6) ++c;
                else if (zj == 1) ++h;
                else ++other;
            }
            if (c == 2 && h == 1 && other == 0) p.amine2 = true;
        }
        if ((z == 7 || z == 8) && !p.hetero_ring && detail::on_small_cycle(g, i)) {
            p.hetero_ring = true;
        }
    }
    return p;
}

// Shipped pattern -> class-ID lookup (a bijection over the shipped patterns).
class PatternTable {
public:
    static PatternTable parse(std::istream& in) {
        PatternTable t;
        std::string line;
        while (std::getline(in, line)) {
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::istringstream ls(line);
            std::string tag;
            if (!(ls >> tag)) continue;
            if (tag == "version") {
                ls >> t.version_;
            } else if (tag == "pattern") {
                std::string bits;
                int id;
                if (!(ls >> bits >> id) || bits.size() != 4) {
                    throw std::runtime_error("pattern table: bad record");
                }
                if (t.to_id_.count(bits) || t.to_bits_.count(id)) {
                    throw std::runtime_error("pattern table: lookup must be a bijection");
                }
                t.to_id_[bits] = id;
                t.to_bits_[id] = bits;
            } else {
                throw std::runtime_error("pattern table: unknown record '" + tag + "'");
            }
        }
        if (t.version_ == 0 || t.to_id_.empty()) {
            throw std::runtime_error("pattern table: missing version or patterns");
        }
        return t;
    }

    static PatternTable load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("pattern table: cannot open " + path);
        return parse(f);
    }

    static const PatternTable& builtin() {
        static const PatternTable t = [] {
            std::istringstream in(builtin_text());
            return parse(in);
        }();
        return t;
    }

    // flag order: hydroxyl, ether, secondary amine, heteroatom ring;
    // IDs encode the bits (hydroxyl = 1, ether = 2, amine = 4, ring = 8)
    static const char* builtin_text() {
        return R"(# functional-group pattern -> class id, version 1
version 1
pattern FFFF 0
pattern TFFF 1
pattern FTFF 2
pattern TTFF 3
pattern FFTF 4
pattern TFTF 5
pattern FTTF 6
pattern TTTF 7
pattern FFFT 8
pattern TFFT 9
pattern FTFT 10
pattern TTFT 11
pattern FFTT 12
pattern TFTT 13
pattern FTTT 14
pattern TTTT 15
)";
    }

    int version() const { return version_; }
    std::size_t size() const { return to_id_.size(); }

    bool has_class(int id) const { return to_bits_.count(id) != 0; }

    int class_of(const ClassPattern& p) const {
        auto it = to_id_.find(p.bits());
        if (it == to_id_.end()) {
            throw std::runtime_error("pattern table: pattern " + p.bits() + " not shipped");
        }
        return it->second;
    }

    const std::string& bits_of(int id) const {
        auto it = to_bits_.find(id);
        if (it == to_bits_.end()) {
            throw std::runtime_error("pattern table: unknown class id " + std::to_string(id));
        }
        return it->second;
    }

private:
    int version_ = 0;
    std::map<std::string, int> to_id_;
    std::map<int, std::string> to_bits_;
};

inline int class_label(const Molecule& mol, const ElementTable& table,
                       const PatternTable& patterns = PatternTable::builtin()) {
    return patterns.class_of(detect_functional_groups(mol, infer_bonds(mol, table)));
}

// Fraction of samples whose detected pattern maps to the target class.
inline double hit_rate(const std::vector<Molecule>& samples, int target_class,
                       const ElementTable& table,
                       const PatternTable& patterns = PatternTable::builtin()) {
    if (!patterns.has_class(target_class)) {
        throw std::runtime_error("hit_rate: unknown class id " + std::to_string(target_class));
    }
    if (samples.empty()) throw std::runtime_error("hit_rate: empty sample set");
    int hits = 0;
    for (const auto& m : samples) {
        if (class_label(m, table, patterns) == target_class) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

// ============================================================================
// Aggregate report
// ============================================================================

struct EvalReport {
    double validity = 0.0;
    double validity_and_uniqueness = 0.0;
    double atom_stability = 0.0;      // over all atoms in the set
    double molecule_stability = 0.0;
    std::optional<double> hit_rate;
    int sample_count = 0;
};

inline EvalReport evaluate(const std::vector<Molecule>& samples, const ElementTable& table,
                           std::optional<int> target_class = std::nullopt,
                           const PatternTable& patterns = PatternTable::builtin()) {
    if (samples.empty()) throw std::runtime_error("evaluate: empty sample set");
    EvalReport r;
    r.sample_count = static_cast<int>(samples.size());
    std::vector<BondGraph> graphs;
    graphs.reserve(samples.size());
    for (const auto& m : samples) graphs.push_back(infer_bonds(m, table));

    int valid = 0, stable_mols = 0;
    long stable_atoms = 0, total_atoms = 0;
    std::set<std::string> unique_valid_keys;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& g = graphs[i];
        total_atoms += g.n;
        int stable = 0;
        for (int a = 0; a < g.n; ++a) {
            if (table.allowed_valence(samples[i].atom_types[a], g.valence_sum(a))) ++stable;
        }
        stable_atoms += stable;
        if (stable == g.n) ++stable_mols;
        if (validity(samples[i], g, table)) {
            ++valid;
            unique_valid_keys.insert(graph_key(samples[i], table));
        }
    }
    const double n = static_cast<double>(samples.size());
    r.validity = valid / n;
    r.validity_and_uniqueness = static_cast<double>(unique_valid_keys.size()) / n;
    r.atom_stability = static_cast<double>(stable_atoms) / static_cast<double>(total_atoms);
    r.molecule_stability = stable_mols / n;
    if (target_class) r.hit_rate = hit_rate(samples, *target_class, table, patterns);
    return r;
}

}  // namespace iar
