// Microbenchmarks for the hot paths: dense products, adjacency construction,
// and the routing variants end to end.
#include <benchmark/benchmark.h>

#include "capsroute/adjacency.hpp"
#include "capsroute/model.hpp"
#include "capsroute/rng.hpp"
#include "capsroute/routing.hpp"
#include "capsroute/tensor.hpp"

namespace {

using namespace capsroute;

Tensor<float> random_matrix(Rng& rng, std::size_t m, std::size_t n) {
    std::vector<float> vals(m * n);
    for (auto& v : vals) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return Tensor<float>::from({m, n}, std::move(vals));
}

void BM_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    auto a = random_matrix(rng, n, n);
    auto b = random_matrix(rng, n, n);
    for (auto _ : state) {
        auto c = matmul(a, b);
        benchmark::DoNotOptimize(c.values().data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_adjacency(benchmark::State& state) {
    Rng rng(2);
    auto caps = random_matrix(rng, 50, 16);
    const auto metric = static_cast<Metric>(state.range(0));
    for (auto _ : state) {
        auto a = pairwise_adjacency(caps, metric, WdMode::dirac);
        benchmark::DoNotOptimize(a.values().data());
    }
}
BENCHMARK(BM_adjacency)->Arg(0)->Arg(1)->Arg(2);

void BM_adjacency_sorted_wd(benchmark::State& state) {
    Rng rng(3);
    auto caps = random_matrix(rng, 50, 16);
    for (auto _ : state) {
        auto a = pairwise_adjacency(caps, Metric::wd, WdMode::sorted);
        benchmark::DoNotOptimize(a.values().data());
    }
}
BENCHMARK(BM_adjacency_sorted_wd);

RoutingConfig routing_config(RoutingVariant variant) {
    RoutingConfig rc;
    rc.variant = variant;
    rc.iterations = 3;
    return rc;
}

void BM_routing(benchmark::State& state) {
    Rng rng(4);
    const std::size_t n = 50, c = 4, d = 16;
    auto u = random_matrix(rng, n, d);
    std::vector<Tensor<float>> u_hat;
    for (std::size_t j = 0; j < c; ++j) u_hat.push_back(random_matrix(rng, n, d));
    auto w_g = random_matrix(rng, d, d);
    auto att_w = random_matrix(rng, d, 1);
    auto att_b = random_matrix(rng, 1, 1);
    const auto variant = static_cast<RoutingVariant>(state.range(0));
    auto rc = routing_config(variant);
    for (auto _ : state) {
        RoutingResult<float> res;
        switch (variant) {
        case RoutingVariant::dynamic:
        case RoutingVariant::leaky:
            res = dynamic_routing(u_hat, rc.iterations, variant == RoutingVariant::leaky);
            break;
        case RoutingVariant::gcn_only:
            res = gcn_only(u_hat, u, rc.metric, rc.wd_mode, w_g);
            break;
        case RoutingVariant::graph:
            res = graph_routing(u_hat, u, rc, w_g, &att_w, &att_b);
            break;
        }
        benchmark::DoNotOptimize(res.v.values().data());
    }
}
BENCHMARK(BM_routing)->Arg(0)->Arg(1)->Arg(2)->Arg(3);

void BM_forward_doc(benchmark::State& state) {
    ModelConfig cfg;
    cfg.D = 32;
    cfg.B1 = 16;
    cfg.B2 = 8;
    cfg.N_caps = 10;
    cfg.d = 16;
    cfg.L = 16;
    cfg.C = 4;
    cfg.seed = 7;
    CapsNet<float> model(cfg, 100);
    Rng rng(8);
    std::vector<int> ids;
    for (std::size_t i = 0; i < cfg.L; ++i) ids.push_back(2 + static_cast<int>(rng.below(98)));
    for (auto _ : state) {
        auto fwd = model.forward_doc(ids);
        benchmark::DoNotOptimize(fwd.probs.values().data());
    }
}
BENCHMARK(BM_forward_doc);

} // namespace

BENCHMARK_MAIN();
