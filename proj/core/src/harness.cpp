#include "funion/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/math/distributions/binomial.hpp>
#include <nlohmann/json.hpp>

#include "funion/perfmodel.hpp"

namespace funion::harness {

namespace {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::array<std::uint8_t, 64> derive_cap_seed(std::uint64_t run_seed, std::uint64_t job_seed,
                                             std::uint64_t which) {
    std::array<std::uint8_t, 64> out{};
    std::uint64_t x = splitmix64(run_seed) ^ splitmix64(job_seed ^ (which * 0x9e3779b9ULL));
    for (auto& b : out) {
        x = splitmix64(x);
        b = static_cast<std::uint8_t>(x & 0xff);
    }
    return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << content;
}

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ConfigError("config field '" + field + "': " + what);
}

}  // namespace

void RunConfig::validate() const {
    require(gateways >= 1, "gateways", "must be >= 1");
    require(mixes_per_layer >= 1, "mixes_per_layer", "must be >= 1");
    require(storage_couriers >= 1, "storage_couriers", "must be >= 1");
    require(compute_couriers >= 1, "compute_couriers", "must be >= 1");
    require(mu > 0, "mu", "must be positive");
    require(lambda_s >= 0, "lambda_s", "must be non-negative");
    require(delta > 0, "delta", "must be positive");
    require(grid_n >= 1, "grid_n", "must be >= 1");
    require(replica_n >= 1, "replica_n", "must be >= 1");
    require(replica_k >= 1 && replica_k <= replica_n, "replica_k",
            "must satisfy 1 <= k <= replica_n");
    require(virtual_nodes >= 1, "virtual_nodes", "must be >= 1");
    require(payload_size >= 1, "payload_size", "must be >= 1");
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto& job = jobs[i];
        const std::string field = "jobs[" + std::to_string(i) + "]";
        require(job.bucket_index >= 1 && job.bucket_index <= grid_n, field + ".bucket_index",
                "must be in [1, grid_n]");
        require(job.ttft >= 0 && job.itl >= 0, field, "latency parameters must be >= 0");
    }
}

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    RunConfig cfg;
    try {
        cfg.seed = j.value("seed", cfg.seed);
        cfg.gateways = j.value("gateways", cfg.gateways);
        cfg.mixes_per_layer = j.value("mixes_per_layer", cfg.mixes_per_layer);
        cfg.storage_couriers = j.value("storage_couriers", cfg.storage_couriers);
        cfg.compute_couriers = j.value("compute_couriers", cfg.compute_couriers);
        cfg.mu = j.value("mu", cfg.mu);
        cfg.lambda_s = j.value("lambda_s", cfg.lambda_s);
        cfg.delta = j.value("delta", cfg.delta);
        cfg.grid_n = j.value("grid_n", cfg.grid_n);
        cfg.replica_n = j.value("replica_n", cfg.replica_n);
        cfg.replica_k = j.value("replica_k", cfg.replica_k);
        cfg.virtual_nodes = j.value("virtual_nodes", cfg.virtual_nodes);
        cfg.payload_size = j.value("payload_size", cfg.payload_size);
        cfg.packet_overhead = j.value("packet_overhead", cfg.packet_overhead);
        cfg.cover_duration = j.value("cover_duration", cfg.cover_duration);
        cfg.bucketing = j.value("bucketing", cfg.bucketing);
        cfg.record_trace = j.value("record_trace", cfg.record_trace);
        for (const auto& job_json : j.value("jobs", json::array())) {
            JobConfig job;
            job.bucket_index = job_json.value("bucket_index", job.bucket_index);
            job.ttft = job_json.value("ttft", job.ttft);
            job.itl = job_json.value("itl", job.itl);
            job.n_out = job_json.value("n_out", job.n_out);
            job.input_tokens = job_json.value("input_tokens", job.input_tokens);
            job.seed = job_json.value("seed", job.seed);
            cfg.jobs.push_back(job);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config type error: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string config_to_json(const RunConfig& cfg) {
    json j{{"seed", cfg.seed},
           {"gateways", cfg.gateways},
           {"mixes_per_layer", cfg.mixes_per_layer},
           {"storage_couriers", cfg.storage_couriers},
           {"compute_couriers", cfg.compute_couriers},
           {"mu", cfg.mu},
           {"lambda_s", cfg.lambda_s},
           {"delta", cfg.delta},
           {"grid_n", cfg.grid_n},
           {"replica_n", cfg.replica_n},
           {"replica_k", cfg.replica_k},
           {"virtual_nodes", cfg.virtual_nodes},
           {"payload_size", cfg.payload_size},
           {"packet_overhead", cfg.packet_overhead},
           {"cover_duration", cfg.cover_duration},
           {"bucketing", cfg.bucketing},
           {"record_trace", cfg.record_trace},
           {"jobs", json::array()}};
    for (const auto& job : cfg.jobs) {
        j["jobs"].push_back({{"bucket_index", job.bucket_index},
                             {"ttft", job.ttft},
                             {"itl", job.itl},
                             {"n_out", job.n_out},
                             {"input_tokens", job.input_tokens},
                             {"seed", job.seed}});
    }
    return j.dump(2);
}

protocol::Bytes make_input(const JobConfig& job, std::uint64_t run_seed) {
    mixnet::StreamRng rng(splitmix64(run_seed ^ splitmix64(job.seed)));
    protocol::Bytes input(static_cast<std::size_t>(job.input_tokens) * protocol::kBytesPerToken);
    for (auto& b : input) b = static_cast<std::uint8_t>(rng.next_u64() & 0xff);
    return input;
}

std::string outcome_to_json(const protocol::JobResult& r) {
    json j{{"job_id", r.job_id},
           {"status", r.failed ? "Failed" : (r.status == protocol::JobStatus::Ok ? "Ok" : "Overflow")},
           {"release_time", r.release_time},
           {"total_latency", r.total_latency},
           {"mix_time", r.mix_time},
           {"compute_bucket_time", r.compute_bucket_time},
           {"poll_retries", r.poll_retries}};
    if (r.failed) j["error"] = r.error;
    return j.dump();
}

RunOutput run_e2e(const RunConfig& config, const std::optional<std::string>& out_dir) {
    config.validate();

    const std::size_t service_count = config.storage_couriers + config.compute_couriers;
    auto topology = mixnet::Topology::regular(config.gateways, config.mixes_per_layer,
                                              service_count);
    std::vector<mixnet::NodeId> storage(topology.services.begin(),
                                        topology.services.begin() + config.storage_couriers);
    std::vector<mixnet::NodeId> compute(topology.services.begin() + config.storage_couriers,
                                        topology.services.end());

    mixnet::Simulation sim(topology, {config.mu}, config.seed, config.wire_size());
    sim.set_record_hops(config.record_trace);

    std::vector<pigeonhole::ReplicaId> replica_ids;
    for (std::size_t i = 0; i < config.replica_n; ++i)
        replica_ids.push_back("replica" + std::to_string(i));
    protocol::Network net(sim,
                          pigeonhole::PlacementConfig::build(replica_ids, config.replica_k,
                                                             config.virtual_nodes),
                          storage, compute);
    protocol::CapabilityRegistry registry;
    protocol::BucketGrid grid{config.delta, config.grid_n};

    RunOutput out;
    out.results.resize(config.jobs.size());
    std::vector<bool> done(config.jobs.size(), false);

    for (std::size_t i = 0; i < config.jobs.size(); ++i) {
        const auto& job = config.jobs[i];
        const mixnet::NodeId client = "client" + std::to_string(i);
        const mixnet::NodeId gateway = topology.gateways[i % topology.gateways.size()];

        protocol::JobSpec spec;
        spec.job_id = i;
        spec.bucket_index = job.bucket_index;
        spec.compute = {job.ttft, job.itl, job.n_out, nullptr};  // identity stub
        spec.input = make_input(job, config.seed);
        spec.input_cap_seed = derive_cap_seed(config.seed, job.seed, 2 * i);
        spec.output_cap_seed = derive_cap_seed(config.seed, job.seed, 2 * i + 1);
        spec.bucketing = config.bucketing;

        protocol::run_job(net, registry, grid, client, gateway, spec,
                          [&out, &done, i](protocol::JobResult result) {
                              out.results[i] = std::move(result);
                              done[i] = true;
                          });
        if (config.cover_duration > 0 && config.lambda_s > 0)
            sim.start_cover(client, gateway, {config.lambda_s}, config.cover_duration);
    }

    sim.run();

    for (std::size_t i = 0; i < done.size(); ++i)
        if (!done[i]) throw ConfigError("job " + std::to_string(i) + " never completed");

    std::ostringstream outcomes;
    for (const auto& r : out.results) outcomes << outcome_to_json(r) << "\n";
    out.outcomes_jsonl = outcomes.str();

    if (config.record_trace) {
        out.trace = mixnet::observer_view(sim.hop_log());
        out.trace_jsonl = mixnet::trace_to_jsonl(out.trace);
    }

    std::ostringstream stores;
    for (const auto& [id, store] : net.replicas) stores << pigeonhole::dump_store(store);
    out.stores_jsonl = stores.str();

    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        write_file(std::filesystem::path(*out_dir) / "outcomes.jsonl", out.outcomes_jsonl);
        write_file(std::filesystem::path(*out_dir) / "trace.jsonl", out.trace_jsonl);
        write_file(std::filesystem::path(*out_dir) / "stores.jsonl", out.stores_jsonl);
    }
    return out;
}

namespace {

struct TrialFeatures {
    double last_out[2] = {0, 0};    // last client-originated packet time
    std::size_t out_count[2] = {0, 0};
    double mean_gap = 0;            // inter-event gap over the whole trace
};

TrialFeatures extract_features(const mixnet::ObserverTrace& trace) {
    TrialFeatures f;
    double prev = -1;
    double gap_sum = 0;
    std::size_t gaps = 0;
    for (const auto& ev : trace.events) {
        for (int c = 0; c < 2; ++c) {
            if (ev.src == "client" + std::to_string(c)) {
                f.last_out[c] = std::max(f.last_out[c], ev.t);
                ++f.out_count[c];
            }
        }
        if (prev >= 0) {
            gap_sum += ev.t - prev;
            ++gaps;
        }
        prev = ev.t;
    }
    if (gaps > 0) f.mean_gap = gap_sum / gaps;
    return f;
}

}  // namespace

DistinguisherReport run_iou_experiment(const IouConfig& config, std::size_t trials) {
    DistinguisherReport report;
    report.trials = trials;
    report.features =
        "per-client last-outbound release proxy, per-client packet counts, mean inter-event gap";
    if (trials == 0) return report;

    protocol::BucketGrid grid{config.base.delta, config.base.grid_n};
    const double edge = grid.edge(config.bucket_index);
    if (config.bucketing) {
        // Null-hypothesis mode needs both jobs comfortably inside the shared
        // bucket so (j, o) match; the margin covers the compute-fetch echo.
        const double slack = edge - std::max(config.fast_compute, config.slow_compute);
        if (slack < 5.0)
            throw ConfigError("matched (j, o) requires bucket edge >= max compute + 5 s");
    }

    mixnet::StreamRng coin(splitmix64(config.seed ^ 0x62697473ULL));
    mixnet::StreamRng tiebreak(splitmix64(config.seed ^ 0x746965ULL));

    for (std::size_t trial = 0; trial < trials; ++trial) {
        const int b = static_cast<int>(coin.next_u64() & 1);
        const std::uint64_t world_seed = splitmix64(config.seed + 0x1000 + trial);

        RunConfig world = config.base;
        world.seed = world_seed;
        world.gateways = std::max<std::size_t>(world.gateways, 2);
        world.bucketing = config.bucketing;
        world.record_trace = true;
        world.delta = config.base.delta;
        world.jobs.clear();

        JobConfig fast{config.bucket_index, config.fast_compute, 0, 0, config.input_tokens,
                       splitmix64(world_seed ^ 0xfa57ULL)};
        JobConfig slow{config.bucket_index, config.slow_compute, 0, 0, config.input_tokens,
                       splitmix64(world_seed ^ 0x510fULL)};
        // b selects the pairing: client0 holds the fast job iff b == 0.
        if (b == 0) {
            world.jobs = {fast, slow};
        } else {
            world.jobs = {slow, fast};
        }

        const RunOutput run = run_e2e(world, std::nullopt);
        const TrialFeatures f = extract_features(run.trace);

        int guess;
        const double diff = f.last_out[0] - f.last_out[1];
        if (diff < 0)
            guess = 0;
        else if (diff > 0)
            guess = 1;
        else
            guess = static_cast<int>(tiebreak.next_u64() & 1);
        if (guess == b) ++report.correct;
    }

    report.accuracy = static_cast<double>(report.correct) / trials;
    using boost::math::binomial_distribution;
    report.ci_lo = binomial_distribution<double>::find_lower_bound_on_p(
        static_cast<double>(trials), static_cast<double>(report.correct), 0.025);
    report.ci_hi = binomial_distribution<double>::find_upper_bound_on_p(
        static_cast<double>(trials), static_cast<double>(report.correct), 0.025);
    return report;
}

void emit_tables(const std::string& out_dir, double mu, double delta, int echoes) {
    std::filesystem::create_directories(out_dir);
    write_file(std::filesystem::path(out_dir) / "table3.csv", perfmodel::table3_csv());
    write_file(std::filesystem::path(out_dir) / "table4.csv",
               perfmodel::table4_csv(mu, delta, echoes));
}

}  // namespace funion::harness
