#include <benchmark/benchmark.h>

#include "funion/bacap.hpp"
#include "funion/mixnet.hpp"
#include "funion/pigeonhole.hpp"

namespace {

using namespace funion;

bacap::WriteCapability make_write_cap() {
    std::array<std::uint8_t, 64> seed{};
    seed.fill(0x42);
    return bacap::generate_capability(seed).first;
}

void BM_SealOpen(benchmark::State& state) {
    const auto write_cap = make_write_cap();
    const auto read_cap = bacap::ReadCapability{write_cap.root_public, write_cap.chain_seed};
    const bacap::Bytes payload(static_cast<std::size_t>(state.range(0)), 0xab);
    std::uint64_t index = 1;
    for (auto _ : state) {
        auto record = bacap::seal(write_cap, index, bacap::kCtxIn, payload);
        auto plain = bacap::open_record(read_cap, index, bacap::kCtxIn, record);
        benchmark::DoNotOptimize(plain);
        ++index;
    }
}
BENCHMARK(BM_SealOpen)->Arg(64)->Arg(30000);

void BM_VerifyRecord(benchmark::State& state) {
    const auto write_cap = make_write_cap();
    const bacap::Bytes payload(1024, 0xcd);
    const auto record = bacap::seal(write_cap, 1, bacap::kCtxIn, payload);
    for (auto _ : state) benchmark::DoNotOptimize(bacap::verify_record(record));
}
BENCHMARK(BM_VerifyRecord);

void BM_SelectReplicas(benchmark::State& state) {
    std::vector<pigeonhole::ReplicaId> ids;
    for (int i = 0; i < 10; ++i) ids.push_back("replica" + std::to_string(i));
    const auto cfg = pigeonhole::PlacementConfig::build(ids, 3, 64);
    bacap::GroupElement box_id{};
    std::uint64_t counter = 0;
    for (auto _ : state) {
        box_id[0] = static_cast<std::uint8_t>(counter++);
        benchmark::DoNotOptimize(pigeonhole::select_replicas(box_id, cfg));
    }
}
BENCHMARK(BM_SelectReplicas);

void BM_EchoRoundTrips(benchmark::State& state) {
    for (auto _ : state) {
        auto topology = mixnet::Topology::regular(2, 4, 3);
        mixnet::Simulation sim(topology, {0.2}, 7, 31000);
        sim.set_record_hops(false);
        for (int i = 0; i < static_cast<int>(state.range(0)); ++i)
            sim.send_echo("client0", "gw0", "svc0", mixnet::PacketKind::Application, nullptr,
                          nullptr);
        sim.run();
        benchmark::DoNotOptimize(sim.now());
    }
}
BENCHMARK(BM_EchoRoundTrips)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
