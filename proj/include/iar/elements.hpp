#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace iar {

struct ElementInfo {
    std::string symbol;
    int charge = 0;
    double covalent_radius = 0.0;  // Angstrom
    std::set<int> valences;
};

// Element data plus pairwise bond-length thresholds. Thresholds are upper
// distance bounds per bond order and strictly decrease as the order rises
// (a triple bond is shorter than a single bond); this is checked at load.
class ElementTable {
public:
    static ElementTable parse(std::istream& in) {
        ElementTable t;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::istringstream ls(line);
            std::string tag;
            if (!(ls >> tag)) continue;
            if (tag == "version") {
                ls >> t.version_;
            } else if (tag == "element") {
                ElementInfo e;
                std::string valences;
                if (!(ls >> e.symbol >> e.charge >> e.covalent_radius >> valences)) {
                    throw std::runtime_error("element table: bad element record at line " +
                                             std::to_string(lineno));
                }
                std::istringstream vs(valences);
                std::string v;
                while (std::getline(vs, v, ',')) e.valences.insert(std::stoi(v));
                if (e.charge < 1 || e.valences.empty()) {
                    throw std::runtime_error("element table: invalid element " + e.symbol);
                }
                t.by_symbol_[e.symbol] = e.charge;
                t.by_charge_[e.charge] = e;
            } else if (tag == "pair") {
                std::string a, b;
                if (!(ls >> a >> b)) {
                    throw std::runtime_error("element table: bad pair record at line " +
                                             std::to_string(lineno));
                }
                std::vector<double> thr;
                double x;
                while (ls >> x) thr.push_back(x);
                if (thr.empty() || thr.size() > 3) {
                    throw std::runtime_error("element table: pair " + a + "-" + b +
                                             " needs 1..3 thresholds");
                }
                for (std::size_t i = 1; i < thr.size(); ++i) {
                    if (!(thr[i] < thr[i - 1])) {
                        throw std::runtime_error("element table: pair " + a + "-" + b +
                                                 " thresholds must strictly decrease with order");
                    }
                }
                const int za = t.charge_of(a), zb = t.charge_of(b);
                t.pairs_[pair_key(za, zb)] = thr;
            } else {
                throw std::runtime_error("element table: unknown record '" + tag + "' at line " +
                                         std::to_string(lineno));
            }
        }
        if (t.version_ == 0) throw std::runtime_error("element table: missing version");
        for (int z : {1, 6, 7, 8, 9}) {
            if (!t.by_charge_.count(z)) {
                throw std::runtime_error("element table: must cover H, C, N, O, F");
            }
        }
        return t;
    }

    static ElementTable load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("element table: cannot open " + path);
        return parse(f);
    }

    // Built-in copy of data/elements.dat so the library works without a
    // data-file path; the two are kept identical (tested).
    static const ElementTable& builtin() {
        static const ElementTable t = [] {
            std::istringstream in(builtin_text());
            return parse(in);
        }();
        return t;
    }

    static const char* builtin_text() {
        return R"(# element bond table, version 1
# element <symbol> <charge> <covalent_radius_A> <allowed_valences>
# pair <sym> <sym> <thr_single_A> [<thr_double_A> [<thr_triple_A>]]
# Bond exists at order k when the interatomic distance is below thr_k;
# thresholds per pair strictly decrease with bond order.
version 1
element H 1 0.31 1
element C 6 0.76 4
element N 7 0.71 3
element O 8 0.66 2
element F 9 0.57 1
pair H H 0.84
pair H C 1.19
pair H N 1.11
pair H O 1.06
pair H F 1.02
pair C C 1.64 1.39 1.23
pair C N 1.57 1.34 1.19
pair C O 1.53 1.25 1.16
pair C F 1.45
pair N N 1.55 1.30 1.13
pair N O 1.50 1.26
pair N F 1.46
pair O O 1.58 1.26
pair O F 1.52
pair F F 1.52
)";
    }

    int version() const { return version_; }

    bool has_charge(int z) const { return by_charge_.count(z) != 0; }
    bool has_symbol(const std::string& s) const { return by_symbol_.count(s) != 0; }

    int charge_of(const std::string& symbol) const {
        auto it = by_symbol_.find(symbol);
        if (it == by_symbol_.end()) {
            throw std::runtime_error("element table: unknown element symbol '" + symbol + "'");
        }
        return it->second;
    }

    const ElementInfo& info(int charge) const {
        auto it = by_charge_.find(charge);
        if (it == by_charge_.end()) {
            throw std::runtime_error("element table: unknown nuclear charge " +
                                     std::to_string(charge));
        }
        return it->second;
    }

    const std::string& symbol_of(int charge) const { return info(charge).symbol; }

    int max_valence(int charge) const { return *info(charge).valences.rbegin(); }

    bool allowed_valence(int charge, int v) const { return info(charge).valences.count(v) != 0; }

    // thresholds[k] bounds bond order k+1; empty when the pair never bonds
    const std::vector<double>& thresholds(int za, int zb) const {
        static const std::vector<double> none;
        auto it = pairs_.find(pair_key(za, zb));
        return it == pairs_.end() ? none : it->second;
    }

    // highest order whose threshold exceeds the distance, 0 if none
    int bond_order(int za, int zb, double dist) const {
        const auto& thr = thresholds(za, zb);
        int order = 0;
        for (std::size_t k = 0; k < thr.size(); ++k) {
            if (dist < thr[k]) order = static_cast<int>(k) + 1;
        }
        return order;
    }

    std::vector<int> charges() const {
        std::vector<int> out;
        for (const auto& [z, e] : by_charge_) out.push_back(z);
        return out;  // ascending (map order)
    }

private:
    static long pair_key(int za, int zb) {
        if (za > zb) std::swap(za, zb);
        return static_cast<long>(za) * 1000 + zb;
    }

    int version_ = 0;
    std::map<std::string, int> by_symbol_;
    std::map<int, ElementInfo> by_charge_;
    std::map<long, std::vector<double>> pairs_;
};

}  // namespace iar
