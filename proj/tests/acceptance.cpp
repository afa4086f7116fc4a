// Acceptance gate: one pass/fail line per criterion, non-zero exit on any
// failure. Statistical checks use 3-sigma (or stated) bounds at fixed seeds.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "funion/bacap.hpp"
#include "funion/harness.hpp"
#include "funion/mixnet.hpp"
#include "funion/perfmodel.hpp"
#include "funion/pigeonhole.hpp"
#include "funion/protocol.hpp"

using namespace funion;

namespace {

int g_failures = 0;

void report(int index, const std::string& name, bool ok, const std::string& detail) {
    std::printf("criterion %2d %-4s %s%s%s\n", index, ok ? "PASS" : "FAIL", name.c_str(),
                detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

double erlang_cdf(int k, double lambda, double x) {
    if (x <= 0) return 0;
    const double lx = lambda * x;
    double term = std::exp(-lx);
    double sum = term;
    for (int i = 1; i < k; ++i) {
        term *= lx / i;
        sum += term;
    }
    return 1.0 - sum;
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max(d, std::abs(f - (i + 1) / n));
        d = std::max(d, std::abs(f - i / n));
    }
    return d;
}

std::pair<double, double> mean_and_variance(const std::vector<double>& xs) {
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    double var = 0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= xs.size() - 1;
    return {mean, var};
}

std::array<std::uint8_t, 64> seed_from(std::uint64_t n) {
    mixnet::StreamRng rng(n);
    std::array<std::uint8_t, 64> out{};
    for (auto& b : out) b = static_cast<std::uint8_t>(rng.next_u64() & 0xff);
    return out;
}

// --- 1: single-echo latency is Erlang(9, 5/s) ------------------------------

void criterion_echo_latency() {
    const double mu = 0.20;
    auto topology = mixnet::Topology::regular(2, 4, 3);
    mixnet::Simulation sim(topology, {mu}, 101);
    sim.set_record_hops(false);

    const int n = 100'000;
    std::vector<double> rtts;
    rtts.reserve(n);
    for (int i = 0; i < n; ++i)
        sim.send_echo("client0", "gw0", "svc0", mixnet::PacketKind::Application, nullptr,
                      [&](mixnet::EchoTiming t) { rtts.push_back(t.replied - t.sent); });
    sim.run();

    const auto [mean, var] = mean_and_variance(rtts);
    const double ks = ks_statistic(rtts, [&](double x) { return erlang_cdf(9, 1.0 / mu, x); });

    std::ostringstream detail;
    detail << "mean=" << mean << " var=" << var << " ks=" << ks << " over " << n << " echoes";
    const bool ok = rtts.size() == n && std::abs(mean - 1.8) < 0.006 &&
                    std::abs(var - 0.36) < 0.01 && ks < 0.01;
    report(1, "echo RTT is Erlang(9, 5/s)", ok, detail.str());
}

// --- 2: five-echo pipeline mix time ----------------------------------------

void criterion_pipeline_latency() {
    const double mu = 0.20;
    auto topology = mixnet::Topology::regular(2, 4, 3);
    mixnet::Simulation sim(topology, {mu}, 202);
    sim.set_record_hops(false);

    const int jobs = 100'000;
    std::vector<double> mix_times(jobs, 0.0);
    std::vector<int> echoes_seen(jobs, 0);
    int complete = 0;
    for (int i = 0; i < jobs * 5; ++i) {
        const int job = i / 5;
        sim.send_echo("client0", "gw0", "svc0", mixnet::PacketKind::Application, nullptr,
                      [&, job](mixnet::EchoTiming t) {
                          mix_times[job] += t.replied - t.sent;
                          if (++echoes_seen[job] == 5) ++complete;
                      });
    }
    sim.run();

    const auto [mean, var] = mean_and_variance(mix_times);
    std::ostringstream detail;
    detail << "mean=" << mean << " var=" << var << " over " << jobs << " five-echo jobs";
    const bool ok = complete == jobs && std::abs(mean - 9.0) < 0.02 &&
                    std::abs(var - 1.8) < 0.05;
    report(2, "five-echo mix time is 9.0 s", ok, detail.str());
}

// --- 3/4: latency table reproduction ---------------------------------------

void criterion_table3() {
    const auto scenarios = perfmodel::canonical_scenarios();
    const double expected[] = {3.85, 19.41, 38.59, 10.34};
    bool ok = scenarios.size() == 4;
    std::ostringstream detail;
    for (std::size_t i = 0; ok && i < scenarios.size(); ++i) {
        const double t = perfmodel::llm_latency(scenarios[i]);
        detail << scenarios[i].name << "=" << t << " ";
        ok = ok && std::abs(t - expected[i]) < 0.01;
    }
    report(3, "forward-pass latencies match", ok, detail.str());
}

void criterion_table4() {
    const auto rows = perfmodel::overhead_table(perfmodel::canonical_scenarios(), 0.20, 0.2);
    const double rounded[] = {4.00, 19.60, 38.60, 10.40};
    const double totals[] = {13.00, 28.60, 47.60, 19.40};
    const int pcts[] = {69, 31, 19, 46};
    bool ok = rows.size() == 4;
    std::ostringstream detail;
    for (std::size_t i = 0; ok && i < rows.size(); ++i) {
        detail << rows[i].llm_rounded << "/" << rows[i].total << "/" << rows[i].mix_pct << " ";
        ok = ok && std::abs(rows[i].llm_rounded - rounded[i]) < 1e-9 &&
             std::abs(rows[i].total - totals[i]) < 1e-9 && rows[i].mix_pct == pcts[i];
    }
    report(4, "overhead table matches", ok, detail.str());
}

// --- 5: bandwidth arithmetic -----------------------------------------------

void criterion_bandwidth() {
    const double daily = perfmodel::bandwidth_budget(2.5, 31'000, 86'400);
    const std::uint64_t rate = perfmodel::max_inference_rate(2.5, 3, 86'400);
    std::ostringstream detail;
    detail << "daily=" << daily << " B, rate=" << rate << "/day";
    const bool ok = daily >= 6.69e9 && daily <= 6.70e9 && rate == 72'000;
    report(5, "cover bandwidth budget", ok, detail.str());
}

// --- 6: BACAP property suite -----------------------------------------------

void criterion_bacap() {
    bool ok = true;
    std::ostringstream detail;
    mixnet::StreamRng rng(606);

    // 10 000 randomized seal/open round trips across many roots.
    int round_trips = 0;
    for (int cap_idx = 0; cap_idx < 100 && ok; ++cap_idx) {
        auto [w, r] = bacap::generate_capability(seed_from(1000 + cap_idx));
        for (int i = 1; i <= 100; ++i) {
            bacap::Bytes plain(rng.uniform_index(512) + 1);
            for (auto& b : plain) b = static_cast<std::uint8_t>(rng.next_u64() & 0xff);
            const std::string ctx = (i % 2) ? std::string(bacap::kCtxIn)
                                            : std::string(bacap::kCtxOut);
            const auto record = bacap::seal(w, i, ctx, plain);
            if (!bacap::verify_record(record) ||
                bacap::open_record(r, i, ctx, record) != plain) {
                ok = false;
                detail << "round-trip failure at cap " << cap_idx << " index " << i << "; ";
                break;
            }
            ++round_trips;
        }
    }
    if (ok) detail << round_trips << " round trips; ";

    // Every single-bit mutation of a short record is rejected.
    {
        auto [w, r] = bacap::generate_capability(seed_from(42));
        const auto record = bacap::seal(w, 1, bacap::kCtxIn, bacap::Bytes{0x13, 0x37});
        auto wire = bacap::encode_record(record);
        int undetected = 0;
        for (std::size_t byte = 0; byte < wire.size(); ++byte) {
            if (byte >= 96 && byte < 100) continue;  // framing length, not record content
            for (int bit = 0; bit < 8; ++bit) {
                auto mutated = wire;
                mutated[byte] ^= static_cast<std::uint8_t>(1 << bit);
                const auto m = bacap::decode_record(mutated);
                if (!bacap::verify_record(m)) continue;
                try {
                    bacap::open_record(r, 1, bacap::kCtxIn, m);
                    ++undetected;
                } catch (const bacap::BacapError&) {
                }
            }
        }
        ok = ok && undetected == 0;
        detail << "bit flips undetected=" << undetected << "; ";
    }

    // Read/write derivation agreement on 1 000 random (index, ctx).
    {
        auto [w, r] = bacap::generate_capability(seed_from(43));
        int mismatches = 0;
        for (int i = 0; i < 1'000; ++i) {
            const std::uint64_t index = rng.uniform_index(1'000) + 1;
            const std::string ctx = "ctx/" + std::to_string(rng.next_u64() % 100'000);
            const auto kr = bacap::derive_box(r, index, ctx);
            const auto kw = bacap::derive_box(w, index, ctx);
            if (kr.box_id != kw.box_id || kr.enc_key != kw.enc_key || kr.nonce != kw.nonce)
                ++mismatches;
        }
        ok = ok && mismatches == 0;
        detail << "derivation mismatches=" << mismatches << "; ";
    }

    // ctx_in / ctx_out Box-ID disjointness and byte uniformity on 10 000 boxes.
    {
        std::set<bacap::GroupElement> in_ids, out_ids;
        std::array<std::uint64_t, 256> histogram{};
        std::uint64_t total_bytes = 0;
        for (int cap_idx = 0; cap_idx < 10; ++cap_idx) {
            auto [w, r] = bacap::generate_capability(seed_from(2000 + cap_idx));
            for (std::uint64_t i = 1; i <= 1'000; ++i) {
                const auto in = bacap::derive_box(r, i, bacap::kCtxIn);
                const auto out = bacap::derive_box(r, i, bacap::kCtxOut);
                in_ids.insert(in.box_id);
                out_ids.insert(out.box_id);
                for (auto b : in.box_id) ++histogram[b];
                for (auto b : out.box_id) ++histogram[b];
                total_bytes += 64;
            }
        }
        std::vector<bacap::GroupElement> overlap;
        std::set_intersection(in_ids.begin(), in_ids.end(), out_ids.begin(), out_ids.end(),
                              std::back_inserter(overlap));
        ok = ok && in_ids.size() == 10'000 && out_ids.size() == 10'000 && overlap.empty();
        detail << "ctx overlap=" << overlap.size() << "; ";

        const double expected = static_cast<double>(total_bytes) / 256.0;
        double chi2 = 0;
        for (auto count : histogram) {
            const double d = static_cast<double>(count) - expected;
            chi2 += d * d / expected;
        }
        const double critical =
            boost::math::quantile(boost::math::chi_squared_distribution<double>(255), 0.999);
        ok = ok && chi2 < critical;
        detail << "chi2=" << chi2 << " (crit " << critical << ")";
    }

    report(6, "capability cryptography properties", ok, detail.str());
}

// --- 7: bucket policy ------------------------------------------------------

void criterion_bucket_policy() {
    const protocol::BucketGrid grid{0.2, 50};
    bool ok = true;
    std::ostringstream detail;

    // Sweep: release is always t_j and the status flips exactly at t_j.
    int wrong = 0;
    for (unsigned j = 1; j <= 50; ++j) {
        const double t_j = grid.edge(j);
        for (int i = 0; i <= 12'000; ++i) {
            const double t_finish = i * 1e-3;
            const auto d = protocol::wait_for_bucket_edge(t_j, t_finish, grid);
            const bool expect_overflow = t_finish >= t_j;
            if (std::abs(d.release_time - t_j) > 1e-12 ||
                (d.status == protocol::JobStatus::Overflow) != expect_overflow)
                ++wrong;
        }
    }
    ok = ok && wrong == 0;
    detail << "sweep violations=" << wrong << "; ";

    // Matched (j, o): 1 000 random in-bucket compute times, one observable.
    mixnet::StreamRng rng(707);
    std::set<double> offsets;
    for (int i = 0; i < 1'000; ++i) {
        const double t_finish = rng.uniform() * grid.edge(30);
        offsets.insert(protocol::wait_for_bucket_edge(grid.edge(30), t_finish, grid).release_time);
    }
    ok = ok && offsets.size() == 1 && *offsets.begin() == grid.edge(30);
    detail << "matched offsets=" << offsets.size() << "; ";

    // Outcome cardinality over all indices is at most n + 1.
    std::set<double> outcomes;
    for (int i = 0; i < 10'000; ++i) {
        const unsigned j = 1 + static_cast<unsigned>(rng.uniform_index(50));
        const double t_finish = rng.uniform() * grid.horizon() * 1.2;
        outcomes.insert(protocol::wait_for_bucket_edge(grid.edge(j), t_finish, grid).release_time);
    }
    ok = ok && outcomes.size() <= 51;
    for (double o : outcomes) ok = ok && grid.on_grid(o);
    detail << "distinct outcomes=" << outcomes.size() << " (n+1=51)";

    report(7, "bucketed release policy", ok, detail.str());
}

// --- 8: end-to-end identity ------------------------------------------------

void criterion_end_to_end() {
    auto topology = mixnet::Topology::regular(2, 4, 5);
    mixnet::Simulation sim(topology, {0.2}, 808);
    sim.set_record_hops(false);
    protocol::Network net(sim,
                          pigeonhole::PlacementConfig::build(
                              {"replica0", "replica1", "replica2", "replica3", "replica4"}, 3, 64),
                          {"svc0", "svc1", "svc2"}, {"svc3", "svc4"});
    protocol::CapabilityRegistry registry;
    const protocol::BucketGrid grid{0.2, 50};

    mixnet::StreamRng rng(909);
    const int jobs = 100;
    std::vector<protocol::Bytes> inputs(jobs);
    std::vector<protocol::JobResult> results(jobs);
    for (int i = 0; i < jobs; ++i) {
        const std::size_t tokens = rng.uniform_index(7'500) + 1;
        inputs[i].resize(tokens * protocol::kBytesPerToken);
        for (auto& b : inputs[i]) b = static_cast<std::uint8_t>(rng.next_u64() & 0xff);

        protocol::JobSpec spec;
        spec.job_id = i;
        spec.bucket_index = 30;
        spec.compute = {0.2, 0.0, 0, nullptr};
        spec.input = inputs[i];
        spec.input_cap_seed = seed_from(5000 + 2 * i);
        spec.output_cap_seed = seed_from(5000 + 2 * i + 1);
        protocol::run_job(net, registry, grid, "client" + std::to_string(i % 4),
                          topology.gateways[i % 2], spec,
                          [&results, i](protocol::JobResult r) { results[i] = std::move(r); });
    }
    sim.run();

    int mismatches = 0;
    for (int i = 0; i < jobs; ++i)
        if (results[i].failed || results[i].status != protocol::JobStatus::Ok ||
            results[i].output != inputs[i])
            ++mismatches;

    // Oversize inputs split into ceil(tokens / 7500) chunks.
    int split_errors = 0;
    for (int i = 0; i < 200; ++i) {
        const std::size_t tokens = rng.uniform_index(40'000) + 1;
        const auto chunks = protocol::split_chunks(
            protocol::Bytes(tokens * protocol::kBytesPerToken, 0x11));
        const std::size_t expected = (tokens + 7'499) / 7'500;
        if (chunks.size() != expected) ++split_errors;
    }

    std::ostringstream detail;
    detail << "identity mismatches=" << mismatches << "/" << jobs
           << ", split errors=" << split_errors << "/200";
    report(8, "store-compute-store identity", mismatches == 0 && split_errors == 0,
           detail.str());
}

// --- 9: IO-U distinguisher -------------------------------------------------

void criterion_iou() {
    harness::IouConfig matched;
    matched.seed = 11;
    matched.bucket_index = 30;
    matched.fast_compute = 0.3;
    matched.slow_compute = 0.5;
    const auto null_report = harness::run_iou_experiment(matched, 2'000);

    harness::IouConfig ablated = matched;
    ablated.seed = 12;
    ablated.bucketing = false;
    ablated.fast_compute = 0.5;
    ablated.slow_compute = 10.5;  // 10 s compute gap
    const auto gap_report = harness::run_iou_experiment(ablated, 400);

    std::ostringstream detail;
    detail << "matched acc=" << null_report.accuracy << " CI [" << null_report.ci_lo << ", "
           << null_report.ci_hi << "]; ablated acc=" << gap_report.accuracy;
    const bool ok = null_report.ci_lo <= 0.5 && 0.5 <= null_report.ci_hi &&
                    gap_report.accuracy > 0.95;
    report(9, "input-output unlinkability game", ok, detail.str());
}

// --- 10/11: wire image and determinism -------------------------------------

harness::RunConfig observable_config() {
    harness::RunConfig cfg;
    cfg.seed = 313;
    cfg.cover_duration = 10.0;
    cfg.jobs = {{25, 0.5, 0.0, 0, 700, 1}, {30, 0.2, 0.005, 40, 300, 2}};
    return cfg;
}

void criterion_wire_image() {
    const auto out = harness::run_e2e(observable_config());

    bool ok = !out.trace.events.empty();
    std::size_t bad_sizes = 0;
    for (const auto& ev : out.trace.events)
        if (ev.size != 31'000) ++bad_sizes;
    ok = ok && bad_sizes == 0;

    // No box identifier or payload material leaks into the observer trace.
    int leaks = 0;
    for (const auto& r : out.results) {
        for (const auto& id : r.input_box_ids)
            if (out.trace_jsonl.find(bacap::to_hex(id)) != std::string::npos) ++leaks;
        for (const auto& id : r.output_box_ids)
            if (out.trace_jsonl.find(bacap::to_hex(id)) != std::string::npos) ++leaks;
        if (!r.output.empty() &&
            out.trace_jsonl.find(bacap::to_hex(r.output)) != std::string::npos)
            ++leaks;
    }
    ok = ok && leaks == 0;

    std::ostringstream detail;
    detail << out.trace.events.size() << " events, bad sizes=" << bad_sizes
           << ", leaks=" << leaks;
    report(10, "constant 31 kB wire image", ok, detail.str());
}

void criterion_determinism() {
    const auto cfg = observable_config();
    const auto a = harness::run_e2e(cfg);
    const auto b = harness::run_e2e(cfg);
    const bool ok = a.outcomes_jsonl == b.outcomes_jsonl && a.trace_jsonl == b.trace_jsonl &&
                    a.stores_jsonl == b.stores_jsonl && !a.outcomes_jsonl.empty();
    report(11, "seeded runs are byte-identical", ok, "");
}

}  // namespace

int main() {
    criterion_echo_latency();
    criterion_pipeline_latency();
    criterion_table3();
    criterion_table4();
    criterion_bandwidth();
    criterion_bacap();
    criterion_bucket_policy();
    criterion_end_to_end();
    criterion_iou();
    criterion_wire_image();
    criterion_determinism();

    if (g_failures == 0) {
        std::printf("all 11 criteria passed\n");
        return 0;
    }
    std::printf("%d criteria failed\n", g_failures);
    return 1;
}
