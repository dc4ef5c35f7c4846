#include <catch2/catch_amalgamated.hpp>

#include "iar/frame.hpp"
#include "iar/rng.hpp"
#include "iar/synth.hpp"
#include "iar/tokenize.hpp"

using namespace iar;

namespace {

Molecule transformed(const Molecule& mol, const Eigen::Matrix3d& q, const Eigen::Vector3d& t) {
    Molecule out = mol;
    for (auto& c : out.coords) c = q * c + t;
    return out;
}

Molecule permuted(const Molecule& mol, const std::vector<int>& perm) {
    Molecule out = mol;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        out.atom_types[i] = mol.atom_types[perm[i]];
        out.coords[i] = mol.coords[perm[i]];
    }
    return out;
}

double max_sequence_deviation(const CanonicalSequence& a, const CanonicalSequence& b) {
    REQUIRE(a.tokens.size() == b.tokens.size());
    double dev = 0.0;
    for (std::size_t i = 0; i < a.tokens.size(); ++i) {
        if (a.tokens[i].type != b.tokens[i].type) return 1e9;
        dev = std::max(dev, (a.tokens[i].coord - b.tokens[i].coord).cwiseAbs().maxCoeff());
    }
    return dev;
}

}  // namespace

TEST_CASE("centroid is the arithmetic mean") {
    Molecule m;
    m.atom_types = {1, 1};
    m.coords = {Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(-1, 0, 0)};
    CHECK(centroid(m).isApprox(Eigen::Vector3d::Zero(), 1e-15));

    Molecule single;
    single.atom_types = {6};
    single.coords = {Eigen::Vector3d(2, 2, 2)};
    CHECK(centroid(single) == Eigen::Vector3d(2, 2, 2));

    Molecule tri;
    tri.atom_types = {1, 1, 1};
    tri.coords = {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0)};
    CHECK(centroid(tri).isApprox(Eigen::Vector3d(1.0 / 3, 1.0 / 3, 0), 1e-15));
}

TEST_CASE("inertia tensor") {
    SECTION("two points on the x axis") {
        std::vector<Eigen::Vector3d> pts = {{1, 0, 0}, {-1, 0, 0}};
        const Eigen::Matrix3d t = inertia_tensor(pts);
        Eigen::Matrix3d expect;
        expect << 0, 0, 0, 0, 2, 0, 0, 0, 2;
        CHECK((t - expect).cwiseAbs().maxCoeff() < 1e-15);
    }
    SECTION("single point at origin") {
        std::vector<Eigen::Vector3d> pts = {{0, 0, 0}};
        CHECK(inertia_tensor(pts).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("matches element-wise brute force") {
        Rng rng(99);
        std::vector<Eigen::Vector3d> pts;
        for (int i = 0; i < 6; ++i) pts.push_back(rng.normal3() * 2.0);
        const Eigen::Matrix3d t = inertia_tensor(pts);
        // independent summation: scalar loops per entry
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                double sum = 0.0;
                for (const auto& p : pts) {
                    const double n2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
                    sum += (r == c ? n2 : 0.0) - p[r] * p[c];
                }
                CHECK(std::abs(t(r, c) - sum) < 1e-12);
            }
        }
    }
}

TEST_CASE("eigen_frame ordering, ties, recovery") {
    Eigen::Vector3d evals;
    Eigen::Matrix3d evecs;
    std::vector<std::vector<int>> groups;

    SECTION("diag(0,2,2): descending with tie group") {
        eigen_frame(Eigen::Vector3d(0, 2, 2).asDiagonal(), evals, evecs, groups);
        CHECK(evals[0] == Catch::Approx(2.0));
        CHECK(evals[1] == Catch::Approx(2.0));
        CHECK(evals[2] == Catch::Approx(0.0));
        REQUIRE(groups.size() == 2);
        CHECK(groups[0] == std::vector<int>{0, 1});
        CHECK(groups[1] == std::vector<int>{2});
    }
    SECTION("diag(3,2,1): no ties") {
        eigen_frame(Eigen::Vector3d(1, 2, 3).asDiagonal(), evals, evecs, groups);
        CHECK(evals.isApprox(Eigen::Vector3d(3, 2, 1), 1e-12));
        CHECK(groups.size() == 3);
    }
    SECTION("zero tensor: identity basis, full degeneracy") {
        eigen_frame(Eigen::Matrix3d::Zero(), evals, evecs, groups);
        CHECK(evecs.isIdentity(1e-15));
        REQUIRE(groups.size() == 1);
        CHECK(groups[0].size() == 3);
    }
    SECTION("construct-then-recover for random rotations") {
        Rng rng(1234);
        for (int trial = 0; trial < 50; ++trial) {
            const Eigen::Matrix3d q = rng.rotation();
            const Eigen::Matrix3d t = q * Eigen::Vector3d(3, 2, 1).asDiagonal() * q.transpose();
            eigen_frame(t, evals, evecs, groups);
            CHECK((evals - Eigen::Vector3d(3, 2, 1)).cwiseAbs().maxCoeff() < 1e-9);
            CHECK((evecs.transpose() * evecs - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <
                  1e-9);
        }
    }
}

TEST_CASE("fix_axis_signs quadrant rule") {
    const Eigen::Matrix3d eye = Eigen::Matrix3d::Identity();
    SECTION("anchor already in the first quadrant") {
        std::vector<Eigen::Vector3d> pts = {{1, 1, 1}};
        std::vector<int> types = {6};
        CHECK(fix_axis_signs(eye, pts, types).isIdentity(1e-15));
    }
    SECTION("third-quadrant anchor flips x and y; det stays +1 without a z flip") {
        std::vector<Eigen::Vector3d> pts = {{-1, -1, 1}};
        std::vector<int> types = {6};
        const Eigen::Matrix3d r = fix_axis_signs(eye, pts, types);
        CHECK(r.determinant() == Catch::Approx(1.0));
        const Eigen::Vector3d mapped = r.transpose() * pts[0];
        CHECK(mapped.x() > 0);
        CHECK(mapped.y() > 0);
        CHECK(mapped.z() == Catch::Approx(1.0));
    }
    SECTION("second-quadrant anchor flips x only; z flips to restore det") {
        std::vector<Eigen::Vector3d> pts = {{-1, 1, 1}};
        std::vector<int> types = {6};
        const Eigen::Matrix3d r = fix_axis_signs(eye, pts, types);
        CHECK(r.determinant() == Catch::Approx(1.0));
        const Eigen::Vector3d mapped = r.transpose() * pts[0];
        CHECK(mapped.x() > 0);
        CHECK(mapped.y() > 0);
        CHECK(mapped.z() == Catch::Approx(-1.0));
    }
    SECTION("exactly one right-handed sign pattern works") {
        Rng rng(5);
        for (int trial = 0; trial < 100; ++trial) {
            Eigen::Vector3d anchor = rng.normal3();
            while (std::abs(anchor.x()) < 1e-3 || std::abs(anchor.y()) < 1e-3) {
                anchor = rng.normal3();
            }
            int hits = 0;
            for (const auto& s : std::vector<Eigen::Vector3d>{
                     {1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}}) {
                const Eigen::Vector3d mapped = s.asDiagonal() * anchor;
                if (mapped.x() > 0 && mapped.y() > 0) ++hits;
            }
            CHECK(hits == 1);
        }
    }
    SECTION("no anchor off both planes") {
        std::vector<Eigen::Vector3d> pts = {{0, 0, 1}, {0, 0, -1}};
        std::vector<int> types = {6, 6};
        CHECK_THROWS_AS(fix_axis_signs(eye, pts, types), NoValidAnchor);
    }
}

TEST_CASE("canonical_pose basics") {
    const auto& t = ElementTable::builtin();
    SECTION("single atom") {
        Molecule m;
        m.atom_types = {6};
        m.coords = {Eigen::Vector3d(3, -2, 5)};
        const auto [posed, frame] = canonical_pose(m);
        CHECK(posed.coords[0].norm() < 1e-12);
        CHECK(frame.rotation.isIdentity(1e-12));
        CHECK(frame.degenerate);
    }
    SECTION("idempotence on an asymmetric molecule") {
        const Molecule m = synth_dataset(3, 10, t)[2];  // jittered ethanol
        const auto [posed, frame] = canonical_pose(m);
        const auto [posed2, frame2] = canonical_pose(posed);
        for (std::size_t i = 0; i < m.size(); ++i) {
            CHECK((posed2.coords[i] - posed.coords[i]).cwiseAbs().maxCoeff() < 1e-9);
        }
        CHECK_FALSE(frame.sign_fallback);
    }
    SECTION("posed centroid at origin, det +1, orthogonal") {
        for (const auto& m : synth_dataset(17, 14, t)) {
            const auto [posed, frame] = canonical_pose(m);
            Eigen::Vector3d c = Eigen::Vector3d::Zero();
            for (const auto& p : posed.coords) c += p;
            CHECK(c.cwiseAbs().maxCoeff() / static_cast<double>(m.size()) < 1e-9);
            CHECK(std::abs(frame.rotation.determinant() - 1.0) < 1e-9);
            CHECK((frame.rotation.transpose() * frame.rotation - Eigen::Matrix3d::Identity())
                      .cwiseAbs()
                      .maxCoeff() < 1e-9);
            CHECK(frame.eigenvalues[0] >= frame.eigenvalues[1]);
            CHECK(frame.eigenvalues[1] >= frame.eigenvalues[2]);
            CHECK(frame.eigenvalues[2] >= -1e-12);
        }
    }
    SECTION("SE(3) invariance fuzz on an asymmetric molecule") {
        const Molecule m = synth_dataset(23, 10, t)[6];  // jittered dimethylamine
        const auto [posed, frame] = canonical_pose(m);
        Rng rng(77);
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const Molecule moved = transformed(m, rng.rotation(), rng.normal3() * 5.0);
            const auto [posed2, frame2] = canonical_pose(moved);
            for (std::size_t i = 0; i < m.size(); ++i) {
                worst = std::max(worst,
                                 (posed2.coords[i] - posed.coords[i]).cwiseAbs().maxCoeff());
            }
        }
        CHECK(worst < 1e-6);
    }
    SECTION("anchor lands in the first quadrant") {
        const Molecule m = synth_dataset(29, 10, t)[5];  // jittered dimethyl ether
        const auto [posed, frame] = canonical_pose(m);
        REQUIRE_FALSE(frame.sign_fallback);
        // the anchor is the farthest atom with both projections off the planes
        int anchor = -1;
        double best = -1.0;
        for (std::size_t i = 0; i < posed.size(); ++i) {
            if (std::abs(posed.coords[i].x()) > 1e-6 && std::abs(posed.coords[i].y()) > 1e-6 &&
                posed.coords[i].norm() > best) {
                best = posed.coords[i].norm();
                anchor = static_cast<int>(i);
            }
        }
        REQUIRE(anchor >= 0);
        CHECK(posed.coords[anchor].x() >= -1e-6);
        CHECK(posed.coords[anchor].y() >= -1e-6);
    }
}

TEST_CASE("degenerate molecules stay deterministic") {
    const auto& t = ElementTable::builtin();
    SECTION("linear CO2: eigenvalue tie, fallback, stable output") {
        const Molecule& co2 = synth_templates()[3].mol;
        const auto [posed, frame] = canonical_pose(co2);
        CHECK(frame.degenerate);
        REQUIRE(frame.degenerate_groups.size() == 2);
        CHECK(frame.degenerate_groups[0] == std::vector<int>{0, 1});
        CHECK(frame.sign_fallback);
        // atoms lie on the canonical z axis
        for (const auto& c : posed.coords) {
            CHECK(std::abs(c.x()) < 1e-9);
            CHECK(std::abs(c.y()) < 1e-9);
        }
        // pose is reproducible under rigid motion (sequence level)
        Rng rng(31);
        const auto seq = tokenize(co2, t);
        for (int trial = 0; trial < 20; ++trial) {
            const auto seq2 = tokenize(transformed(co2, rng.rotation(), rng.normal3()), t);
            CHECK(max_sequence_deviation(seq, seq2) < 1e-6);
        }
    }
    SECTION("planar water uses the fallback and stays invariant") {
        const Molecule& water = synth_templates()[0].mol;
        const auto [posed, frame] = canonical_pose(water);
        CHECK(frame.sign_fallback);
        CHECK_FALSE(frame.degenerate);
        Rng rng(32);
        const auto seq = tokenize(water, t);
        for (int trial = 0; trial < 20; ++trial) {
            const auto seq2 = tokenize(transformed(water, rng.rotation(), rng.normal3()), t);
            CHECK(max_sequence_deviation(seq, seq2) < 1e-6);
        }
    }
    SECTION("perfect methane: spherical degeneracy") {
        const Molecule& methane = synth_templates()[1].mol;
        const auto [posed, frame] = canonical_pose(methane);
        CHECK(frame.degenerate);
        CHECK(frame.degenerate_groups[0].size() == 3);
        const auto seq = tokenize(methane, t);
        CHECK(seq.tokens[0].type == 6);
    }
}

TEST_CASE("canonical_rank") {
    const auto& t = ElementTable::builtin();
    SECTION("methane: carbon first, hydrogens by rounded coords") {
        const Molecule m = synth_dataset(41, 9, t)[1];  // jittered methane
        const auto [posed, frame] = canonical_pose(m);
        const BondGraph g = infer_bonds(posed, t);
        const CanonicalRank r = canonical_rank(g, posed);
        REQUIRE(r.rank.size() == 5);
        CHECK(r.rank[0] == 1);  // carbon
        CHECK(r.tie_breaks > 0);
        // hydrogens 2..5 ordered by rounded coordinate triple
        std::vector<std::array<long long, 3>> hs;
        for (int i = 1; i < 5; ++i) {
            hs.push_back({std::llround(posed.coords[i][0] * 1e4),
                          std::llround(posed.coords[i][1] * 1e4),
                          std::llround(posed.coords[i][2] * 1e4)});
        }
        std::vector<int> expect_order(4);
        std::iota(expect_order.begin(), expect_order.end(), 0);
        std::sort(expect_order.begin(), expect_order.end(),
                  [&](int a, int b) { return hs[a] < hs[b]; });
        for (int pos = 0; pos < 4; ++pos) {
            CHECK(r.rank[1 + expect_order[pos]] == pos + 2);
        }
    }
    SECTION("ethanol ranks are permutation invariant") {
        const Molecule m = synth_dataset(43, 10, t)[2];
        const auto seq = tokenize(m, t);
        Rng rng(55);
        std::vector<int> perm(m.size());
        std::iota(perm.begin(), perm.end(), 0);
        for (int trial = 0; trial < 50; ++trial) {
            rng.shuffle(perm);
            const auto seq2 = tokenize(permuted(m, perm), t);
            CHECK(max_sequence_deviation(seq, seq2) < 1e-9);
        }
    }
    SECTION("ranks depend only on graph and posed coords") {
        const Molecule m = synth_dataset(47, 10, t)[4];  // jittered methylamine
        const auto [posed, frame] = canonical_pose(m);
        const BondGraph g = infer_bonds(posed, t);
        const CanonicalRank r1 = canonical_rank(g, posed);
        const CanonicalRank r2 = canonical_rank(g, posed);
        CHECK(r1.rank == r2.rank);
        std::vector<int> sorted = r1.rank;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == static_cast<int>(i) + 1);
    }
}

TEST_CASE("tokenize composed invariance") {
    const auto& t = ElementTable::builtin();
    SECTION("single atom tokenizes to the origin") {
        Molecule m;
        m.atom_types = {8};
        m.coords = {Eigen::Vector3d(4, 5, 6)};
        const auto seq = tokenize(m, t);
        REQUIRE(seq.tokens.size() == 1);
        CHECK(seq.tokens[0].coord.norm() < 1e-12);
    }
    SECTION("methane: five tokens, carbon first") {
        const auto seq = tokenize(synth_dataset(51, 9, t)[1], t);
        REQUIRE(seq.tokens.size() == 5);
        CHECK(seq.tokens[0].type == 6);
        for (int i = 1; i < 5; ++i) CHECK(seq.tokens[i].type == 1);
    }
    SECTION("random rigid transform + permutation leaves the sequence unchanged") {
        Rng rng(60);
        for (int mol_idx : {2, 4, 5, 6}) {
            const Molecule m = synth_dataset(100 + mol_idx, 10, t)[mol_idx];
            const auto seq = tokenize(m, t);
            std::vector<int> perm(m.size());
            std::iota(perm.begin(), perm.end(), 0);
            for (int trial = 0; trial < 25; ++trial) {
                rng.shuffle(perm);
                const Molecule moved =
                    permuted(transformed(m, rng.rotation(), rng.normal3() * 3.0), perm);
                const auto seq2 = tokenize(moved, t);
                CHECK(max_sequence_deviation(seq, seq2) < 1e-6);
            }
        }
    }
}
