#pragma once

#include <functional>
#include <vector>

#include "iar/molecule.hpp"

namespace iar {

// Inferred bond graph: symmetric, no self-edges, integer orders 1..3.
struct BondGraph {
    struct Edge {
        int a = 0, b = 0;
        int order = 0;
    };

    int n = 0;
    std::vector<Edge> edges;
    std::vector<std::vector<std::pair<int, int>>> adj;  // per atom: (neighbor, order)

    void add_edge(int a, int b, int order) {
        edges.push_back({a, b, order});
        adj[a].emplace_back(b, order);
        adj[b].emplace_back(a, order);
    }

    int degree(int i) const { return static_cast<int>(adj[i].size()); }

    int valence_sum(int i) const {
        int s = 0;
        for (const auto& [j, o] : adj[i]) s += o;
        return s;
    }

    bool connected() const {
        if (n == 0) return false;
        std::vector<bool> seen(n, false);
        std::vector<int> stack{0};
        seen[0] = true;
        int reached = 1;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (const auto& [v, o] : adj[u]) {
                if (!seen[v]) {
                    seen[v] = true;
                    ++reached;
                    stack.push_back(v);
                }
            }
        }
        return reached == n;
    }

    // True per atom when it lies on a simple cycle, i.e. has an incident
    // non-bridge edge (bridges via the usual low-link DFS).
    std::vector<bool> ring_membership() const {
        // adjacency annotated with edge ids so the DFS can skip its parent edge
        std::vector<std::vector<std::pair<int, int>>> nbr(n);  // (neighbor, edge id)
        for (std::size_t e = 0; e < edges.size(); ++e) {
            nbr[edges[e].a].emplace_back(edges[e].b, static_cast<int>(e));
            nbr[edges[e].b].emplace_back(edges[e].a, static_cast<int>(e));
        }
        std::vector<int> disc(n, -1), low(n, 0);
        std::vector<bool> in_ring(n, false);
        int timer = 0;
        std::function<void(int, int)> dfs = [&](int u, int parent_edge) {
            disc[u] = low[u] = timer++;
            for (const auto& [v, eid] : nbr[u]) {
                if (eid == parent_edge) continue;
                if (disc[v] == -1) {
                    dfs(v, eid);
                    low[u] = std::min(low[u], low[v]);
                    if (low[v] <= disc[u]) in_ring[u] = in_ring[v] = true;  // tree edge on a cycle
                } else {
                    low[u] = std::min(low[u], disc[v]);
                    if (disc[v] < disc[u]) in_ring[u] = in_ring[v] = true;  // back edge
                }
            }
        };
        for (int i = 0; i < n; ++i) {
            if (disc[i] == -1) dfs(i, -1);
        }
        return in_ring;
    }
};

// Bond order per pair: highest order whose distance threshold exceeds the
// interatomic distance.
inline BondGraph infer_bonds(const Molecule& mol, const ElementTable& table) {
    const int n = static_cast<int>(mol.size());
    BondGraph g;
    g.n = n;
    g.adj.assign(n, {});
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double d = (mol.coords[i] - mol.coords[j]).norm();
            const int order = table.bond_order(mol.atom_types[i], mol.atom_types[j], d);
            if (order > 0) g.add_edge(i, j, order);
        }
    }
    return g;
}

}  // namespace iar
