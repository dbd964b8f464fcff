// Routing suite: graph aggregation, the attention gate, agreement iteration,
// and the reduction identities tying the graph path back to plain
// routing-by-agreement.
#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"

#include "capsroute/adjacency.hpp"
#include "capsroute/config.hpp"
#include "capsroute/rng.hpp"
#include "capsroute/routing.hpp"
#include "capsroute/tensor.hpp"

using namespace capsroute;
using testhelp::bitwise_equal;
using testhelp::max_abs_diff;
using testhelp::op_grad_max_rel_err;
using testhelp::random_tensor;
using testhelp::scalarize;

namespace {
constexpr int kTrials = 100;

std::vector<Tensor<double>> random_slabs(Rng& rng, std::size_t C, std::size_t n, std::size_t d,
                                         double lo = -1.0, double hi = 1.0, bool grad = false) {
    std::vector<Tensor<double>> slabs;
    for (std::size_t j = 0; j < C; ++j) slabs.push_back(random_tensor<double>(rng, {n, d}, lo, hi, grad));
    return slabs;
}

Tensor<double> squash_vec(const Tensor<double>& row) { // 1×d convenience
    return squash_rows(row);
}

RoutingConfig graph_cfg(Metric m, NormMode norm, bool attention, int iterations) {
    RoutingConfig cfg;
    cfg.variant = RoutingVariant::graph;
    cfg.metric = m;
    cfg.norm = norm;
    cfg.attention = attention;
    cfg.iterations = iterations;
    return cfg;
}
} // namespace

TEST_CASE("graph aggregation with identity adjacency and identity mixing is a no-op") {
    Rng rng(70);
    auto u_hat = random_slabs(rng, 3, 5, 4);
    auto h = gcn_aggregate(u_hat, identity_adjacency<double>(5), Tensor<double>::identity(4));
    REQUIRE(h.size() == 3);
    for (std::size_t j = 0; j < 3; ++j) CHECK(bitwise_equal(h[j], u_hat[j]));
}

TEST_CASE("graph aggregation under a uniform softmax row adds the slab mean") {
    // All-equal capsules give a zero affinity matrix, so the normalized
    // adjacency is (1/N)*ones + I and each row becomes itself plus the mean.
    Rng rng(71);
    const std::size_t n = 4, d = 3;
    auto caps = Tensor<double>::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) caps.values_mut()[i * d + k] = 0.3 * static_cast<double>(k);
    auto At = normalize_general(pairwise_adjacency(caps, Metric::ed));
    auto u_hat = random_slabs(rng, 2, n, d);
    auto h = gcn_aggregate(u_hat, At, Tensor<double>::identity(d));
    for (std::size_t j = 0; j < 2; ++j) {
        auto mean = mean_rows(u_hat[j]);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < d; ++k)
                CHECK(h[j].at(i, k) ==
                      doctest::Approx(u_hat[j].at(i, k) + mean.at(0, k)).epsilon(1e-12));
    }
}

TEST_CASE("graph aggregation matches a scalar triple loop") {
    Rng rng(72);
    const std::size_t n = 2, d = 2;
    auto At = random_tensor<double>(rng, {n, n}, 0.0, 1.0, false);
    auto W = random_tensor<double>(rng, {d, d}, -1.0, 1.0, false);
    auto u_hat = random_slabs(rng, 2, n, d);
    auto h = gcn_aggregate(u_hat, At, W);
    for (std::size_t j = 0; j < 2; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < d; ++k) {
                double acc = 0.0;
                for (std::size_t q = 0; q < n; ++q)
                    for (std::size_t r = 0; r < d; ++r)
                        acc += At.at(i, q) * u_hat[j].at(q, r) * W.at(r, k);
                CHECK(h[j].at(i, k) == doctest::Approx(acc).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("attention over a single parent class passes features through unchanged") {
    Rng rng(73);
    auto h = random_slabs(rng, 1, 6, 4);
    auto att_w = random_tensor<double>(rng, {4, 1}, -1.0, 1.0, false);
    auto att_b = random_tensor<double>(rng, {1, 1}, -1.0, 1.0, false);
    Tensor<double> alpha;
    auto o = attention_gate(h, att_w, att_b, &alpha);
    REQUIRE(o.size() == 1);
    CHECK(bitwise_equal(o[0], h[0]));
    for (double a : alpha.values()) CHECK(a == 1.0);
}

TEST_CASE("attention with zero weights splits mass uniformly across parents") {
    Rng rng(74);
    const std::size_t C = 4;
    auto h = random_slabs(rng, C, 5, 3);
    Tensor<double> alpha;
    auto o = attention_gate(h, Tensor<double>::zeros({3, 1}), Tensor<double>::zeros({1, 1}), &alpha);
    for (double a : alpha.values()) CHECK(a == doctest::Approx(0.25).epsilon(1e-12));
    for (std::size_t j = 0; j < C; ++j)
        CHECK(max_abs_diff(o[j], affine(h[j], 0.25, 0.0)) <= 1e-15);
}

TEST_CASE("attention weights form a distribution over parents for every child") {
    Rng rng(75);
    for (int t = 0; t < kTrials; ++t) {
        const std::size_t C = 2 + rng.below(4);
        const std::size_t n = 1 + rng.below(6);
        const std::size_t d = 1 + rng.below(5);
        auto h = random_slabs(rng, C, n, d, -2.0, 2.0);
        auto att_w = random_tensor<double>(rng, {d, 1}, -1.0, 1.0, false);
        auto att_b = random_tensor<double>(rng, {1, 1}, -0.5, 0.5, false);
        Tensor<double> alpha;
        auto o = attention_gate(h, att_w, att_b, &alpha);
        REQUIRE(alpha.dim(0) == n);
        REQUIRE(alpha.dim(1) == C);
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < C; ++j) row += alpha.at(i, j);
            CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
        }
        // Each gated vector is its weight times the input vector.
        for (std::size_t j = 0; j < C; ++j)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < d; ++k)
                    CHECK(o[j].at(i, k) == doctest::Approx(alpha.at(i, j) * h[j].at(i, k)).epsilon(1e-12));
    }
}

TEST_CASE("single-child single-parent routing for one iteration is just squash") {
    Rng rng(76);
    auto u_hat = random_slabs(rng, 1, 1, 5);
    auto res = dynamic_routing(u_hat, 1, /*leaky=*/false);
    CHECK(max_abs_diff(res.v, squash_vec(u_hat[0])) <= 1e-15);
    CHECK(res.couplings.at(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("parents with identical predictions stay identical through routing") {
    Rng rng(77);
    for (int r = 1; r <= 3; ++r) {
        auto slab = random_tensor<double>(rng, {4, 3}, -1.0, 1.0, false);
        auto res = dynamic_routing(std::vector<Tensor<double>>{slab, slab}, r, false);
        for (std::size_t k = 0; k < 3; ++k) CHECK(res.v.at(0, k) == res.v.at(1, k));
    }
}

TEST_CASE("leaky routing with one parent routes exactly half the mass") {
    // The leak slot adds a fixed zero logit, so softmax([0,0]) puts 0.5 on
    // the real parent; the leak share is discarded before the weighted sum.
    Rng rng(78);
    auto u_hat = random_slabs(rng, 1, 3, 4);
    auto res = dynamic_routing(u_hat, 1, /*leaky=*/true);
    auto s = affine(matmul(Tensor<double>::from({1, 3}, {1.0, 1.0, 1.0}), u_hat[0]), 0.5, 0.0);
    CHECK(max_abs_diff(res.v, squash_vec(s)) <= 1e-12);
    // couplings keep the leak column: [0.5, 0.5] per child
    REQUIRE(res.couplings.dim(1) == 2);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(res.couplings.at(i, 0) == doctest::Approx(0.5));
        CHECK(res.couplings.at(i, 1) == doctest::Approx(0.5));
    }
}

TEST_CASE("coupling rows sum to 1 at every iteration, leaky or not") {
    Rng rng(79);
    for (int t = 0; t < kTrials; ++t) {
        const std::size_t C = 1 + rng.below(4);
        const std::size_t n = 1 + rng.below(6);
        const bool leaky = rng.below(2) == 1;
        auto u_hat = random_slabs(rng, C, n, 1 + rng.below(6), -2.0, 2.0);
        auto res = dynamic_routing(u_hat, 3, leaky, /*want_trace=*/true);
        REQUIRE(res.trace.size() == 3);
        const std::size_t cols = C + (leaky ? 1 : 0);
        for (const auto& rec : res.trace) {
            REQUIRE(rec.couplings.size() == n * cols);
            for (std::size_t i = 0; i < n; ++i) {
                double row = 0.0;
                for (std::size_t j = 0; j < cols; ++j) row += rec.couplings[i * cols + j];
                CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
            }
        }
        // First iteration starts from zero logits.
        for (double lv : res.trace[0].logits) CHECK(lv == 0.0);
    }
}

TEST_CASE("the agreement loop rejects bad iteration counts and slab mismatches") {
    Rng rng(80);
    auto u_hat = random_slabs(rng, 2, 3, 2);
    CHECK_THROWS_AS(dynamic_routing(u_hat, 0, false), ContractError);
    auto features = random_slabs(rng, 3, 3, 2);
    CHECK_THROWS_AS(agreement_loop(features, u_hat, 1, false), ShapeError);
    CHECK_THROWS_AS(agreement_loop(std::vector<Tensor<double>>{}, std::vector<Tensor<double>>{}, 1, false),
                    ShapeError);
}

TEST_CASE("graph routing with identity adjacency and identity mixing equals plain routing bitwise") {
    Rng rng(81);
    for (int t = 0; t < kTrials; ++t) {
        const std::size_t C = 1 + rng.below(4);
        const std::size_t n = 1 + rng.below(8);
        const std::size_t d = 1 + rng.below(16);
        const int r = 1 + static_cast<int>(rng.below(4));
        auto u = random_tensor<double>(rng, {n, d}, -1.0, 1.0, false);
        auto u_hat = random_slabs(rng, C, n, d, -1.5, 1.5);
        auto cfg = graph_cfg(Metric::wd, NormMode::identity, /*attention=*/false, r);
        auto graph = graph_routing(u_hat, u, cfg, Tensor<double>::identity(d));
        auto plain = dynamic_routing(u_hat, r, false);
        CHECK(bitwise_equal(graph.v, plain.v));
        CHECK(bitwise_equal(graph.couplings, plain.couplings));
    }
}

TEST_CASE("single-node graph routing under general normalization doubles the prediction") {
    // With one child the normalized adjacency is [[2]], so the routed parent
    // is squash(2 * u_hat * W_g).
    Rng rng(82);
    for (int t = 0; t < 20; ++t) {
        const std::size_t d = 2 + rng.below(5);
        auto u = random_tensor<double>(rng, {1, d}, -1.0, 1.0, false);
        auto u_hat = random_slabs(rng, 1, 1, d);
        auto W_g = random_tensor<double>(rng, {d, d}, -1.0, 1.0, false);
        auto cfg = graph_cfg(Metric::ed, NormMode::general, false, 1);
        auto res = graph_routing(u_hat, u, cfg, W_g);
        auto expect = squash_vec(affine(matmul(u_hat[0], W_g), 2.0, 0.0));
        CHECK(max_abs_diff(res.v, expect) <= 1e-12);
    }
}

TEST_CASE("routed parent capsules stay inside the unit ball") {
    Rng rng(83);
    for (int t = 0; t < 30; ++t) {
        const std::size_t C = 1 + rng.below(4), n = 1 + rng.below(6), d = 2 + rng.below(6);
        auto u = random_tensor<double>(rng, {n, d}, -2.0, 2.0, false);
        auto u_hat = random_slabs(rng, C, n, d, -2.0, 2.0);
        auto W_g = random_tensor<double>(rng, {d, d}, -1.0, 1.0, false);
        auto att_w = random_tensor<double>(rng, {d, 1}, -1.0, 1.0, false);
        auto att_b = random_tensor<double>(rng, {1, 1}, -0.5, 0.5, false);
        auto cfg = graph_cfg(Metric::cs, NormMode::general, true, 1 + static_cast<int>(rng.below(4)));
        auto res = graph_routing(u_hat, u, cfg, W_g, &att_w, &att_b);
        auto norms = row_norms(res.v);
        for (double nv : norms.values()) CHECK(nv < 1.0);
    }
}

TEST_CASE("graph routing demands attention weights when the gate is enabled") {
    Rng rng(84);
    auto u = random_tensor<double>(rng, {2, 3}, -1.0, 1.0, false);
    auto u_hat = random_slabs(rng, 2, 2, 3);
    auto cfg = graph_cfg(Metric::ed, NormMode::general, true, 1);
    CHECK_THROWS_AS(graph_routing(u_hat, u, cfg, Tensor<double>::identity(3)), ContractError);
    // With the gate off, alpha is left unset.
    auto cfg_off = graph_cfg(Metric::ed, NormMode::general, false, 1);
    auto res = graph_routing(u_hat, u, cfg_off, Tensor<double>::identity(3));
    CHECK(!res.alpha.valid());
    // With the gate on, alpha is produced.
    auto att_w = random_tensor<double>(rng, {3, 1}, -1.0, 1.0, false);
    auto att_b = random_tensor<double>(rng, {1, 1}, -0.5, 0.5, false);
    auto res_on = graph_routing(u_hat, u, cfg, Tensor<double>::identity(3), &att_w, &att_b);
    CHECK(res_on.alpha.valid());
    CHECK(res_on.alpha.dim(0) == 2);
    CHECK(res_on.alpha.dim(1) == 2);
}

TEST_CASE("graph routing is equivariant under child permutations") {
    Rng rng(85);
    for (int t = 0; t < kTrials; ++t) {
        const std::size_t C = 1 + rng.below(3), n = 2 + rng.below(5), d = 2 + rng.below(4);
        auto u = random_tensor<double>(rng, {n, d}, -1.0, 1.0, false);
        auto u_hat = random_slabs(rng, C, n, d);
        auto W_g = random_tensor<double>(rng, {d, d}, -1.0, 1.0, false);
        auto att_w = random_tensor<double>(rng, {d, 1}, -1.0, 1.0, false);
        auto att_b = random_tensor<double>(rng, {1, 1}, -0.5, 0.5, false);

        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        rng.shuffle(perm);
        auto permute = [&](const Tensor<double>& m) {
            Tensor<double> out = Tensor<double>::zeros({n, d});
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < d; ++k) out.values_mut()[i * d + k] = m.at(perm[i], k);
            return out;
        };
        std::vector<Tensor<double>> u_hat_p;
        for (const auto& slab : u_hat) u_hat_p.push_back(permute(slab));

        auto cfg = graph_cfg(Metric::ed, NormMode::general, true, 2);
        auto a = graph_routing(u_hat, u, cfg, W_g, &att_w, &att_b);
        auto b = graph_routing(u_hat_p, permute(u), cfg, W_g, &att_w, &att_b);
        // The child sums reassociate, so allow double-precision rounding.
        CHECK(max_abs_diff(a.v, b.v) <= 1e-9);
    }
}

TEST_CASE("a parent everyone agrees on soaks up coupling mass monotonically") {
    Rng rng(86);
    const std::size_t C = 3, n = 5, d = 4;
    // Parent 1's predictions all point the same way; the others are noise.
    auto target = Tensor<double>::from({1, d}, {2.0, -1.0, 0.5, 1.5});
    std::vector<Tensor<double>> u_hat;
    for (std::size_t j = 0; j < C; ++j) {
        if (j == 1) {
            Tensor<double> slab = Tensor<double>::zeros({n, d});
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < d; ++k) slab.values_mut()[i * d + k] = target.at(0, k);
            u_hat.push_back(slab);
        } else {
            u_hat.push_back(random_tensor<double>(rng, {n, d}, -0.3, 0.3, false));
        }
    }
    auto res = dynamic_routing(u_hat, 5, false, /*want_trace=*/true);
    REQUIRE(res.trace.size() == 5);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 1; t < res.trace.size(); ++t) {
            const double prev = res.trace[t - 1].couplings[i * C + 1];
            const double cur = res.trace[t].couplings[i * C + 1];
            CHECK(cur >= prev - 1e-12);
        }
    }
    // And it ends up the dominant parent for every child.
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(res.couplings.at(i, 1) > res.couplings.at(i, 0));
        CHECK(res.couplings.at(i, 1) > res.couplings.at(i, 2));
    }
}

TEST_CASE("gcn-only baseline matches its closed forms") {
    Rng rng(87);
    // Single child: adjacency [[2]], mean of one row, so squash(2 u_hat W_g).
    for (int t = 0; t < 10; ++t) {
        const std::size_t d = 2 + rng.below(4);
        auto u = random_tensor<double>(rng, {1, d}, -1.0, 1.0, false);
        auto u_hat = random_slabs(rng, 2, 1, d);
        auto W_g = random_tensor<double>(rng, {d, d}, -1.0, 1.0, false);
        auto res = gcn_only(u_hat, u, Metric::ed, WdMode::dirac, W_g);
        for (std::size_t j = 0; j < 2; ++j) {
            auto expect = squash_vec(affine(matmul(u_hat[j], W_g), 2.0, 0.0));
            for (std::size_t k = 0; k < d; ++k)
                CHECK(res.v.at(j, k) == doctest::Approx(expect.at(0, k)).epsilon(1e-12));
        }
        // No agreement iterations: couplings are uniform.
        for (double c : res.couplings.values()) CHECK(c == doctest::Approx(0.5));
    }
    // All-equal children: each aggregated row is twice the slab mean.
    const std::size_t n = 4, d = 3;
    auto caps = Tensor<double>::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i) caps.values_mut()[i * d] = 0.7;
    auto u_hat = random_slabs(rng, 2, n, d);
    auto W_g = random_tensor<double>(rng, {d, d}, -1.0, 1.0, false);
    auto res = gcn_only(u_hat, caps, Metric::wd, WdMode::dirac, W_g);
    for (std::size_t j = 0; j < 2; ++j) {
        auto expect = squash_vec(affine(matmul(mean_rows(u_hat[j]), W_g), 2.0, 0.0));
        for (std::size_t k = 0; k < d; ++k)
            CHECK(res.v.at(j, k) == doctest::Approx(expect.at(0, k)).epsilon(1e-9));
    }
    auto norms = row_norms(res.v);
    for (double nv : norms.values()) CHECK(nv < 1.0);
}

TEST_CASE("gradients through the full graph routing loop match central differences") {
    Rng rng(88);
    const std::size_t C = 3, n = 6, d = 8;
    auto u = random_tensor<double>(rng, {n, d}, -1.0, 1.0);
    auto u_hat = random_slabs(rng, C, n, d, -1.0, 1.0, /*grad=*/true);
    auto W_g = random_tensor<double>(rng, {d, d}, -0.5, 0.5);
    auto att_w = random_tensor<double>(rng, {d, 1}, -0.5, 0.5);
    auto att_b = random_tensor<double>(rng, {1, 1}, -0.2, 0.2);
    auto cfg = graph_cfg(Metric::ed, NormMode::general, true, 3);
    Rng wrng(rng.below(1u << 30));
    auto loss = [&]() {
        Rng r = wrng;
        auto res = graph_routing(u_hat, u, cfg, W_g, &att_w, &att_b);
        return scalarize(res.v, r);
    };
    std::vector<Tensor<double>> inputs{u, W_g, att_w, att_b};
    for (const auto& slab : u_hat) inputs.push_back(slab);
    CHECK(op_grad_max_rel_err(loss, inputs) < 1e-5);
}

TEST_CASE("gradients through leaky routing and the gcn-only baseline match central differences") {
    Rng rng(89);
    {
        auto u_hat = random_slabs(rng, 2, 4, 3, -1.0, 1.0, true);
        Rng wrng(rng.below(1u << 30));
        auto loss = [&]() {
            Rng r = wrng;
            return scalarize(dynamic_routing(u_hat, 3, /*leaky=*/true).v, r);
        };
        CHECK(op_grad_max_rel_err(loss, {u_hat[0], u_hat[1]}) < 1e-5);
    }
    {
        auto u = random_tensor<double>(rng, {4, 3}, -1.0, 1.0);
        auto u_hat = random_slabs(rng, 2, 4, 3, -1.0, 1.0, true);
        auto W_g = random_tensor<double>(rng, {3, 3}, -0.5, 0.5);
        Rng wrng(rng.below(1u << 30));
        auto loss = [&]() {
            Rng r = wrng;
            return scalarize(gcn_only(u_hat, u, Metric::ed, WdMode::dirac, W_g).v, r);
        };
        CHECK(op_grad_max_rel_err(loss, {u, u_hat[0], u_hat[1], W_g}) < 1e-5);
    }
}
