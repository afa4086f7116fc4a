#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "funion/mixnet.hpp"
#include "funion/protocol.hpp"

// Configuration loading, end-to-end runs, the empirical input-output
// unlinkability experiment, and file outputs.

namespace funion::harness {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct JobConfig {
    unsigned bucket_index = 1;
    double ttft = 0;
    double itl = 0;
    unsigned n_out = 0;
    unsigned input_tokens = 0;
    std::uint64_t seed = 0;
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::size_t gateways = 2;
    std::size_t mixes_per_layer = 4;
    std::size_t storage_couriers = 3;
    std::size_t compute_couriers = 2;
    double mu = 0.20;
    double lambda_s = 2.5;
    double delta = 0.2;
    unsigned grid_n = 50;
    std::size_t replica_n = 5;
    unsigned replica_k = 3;
    unsigned virtual_nodes = 64;
    std::size_t payload_size = 30'000;
    std::size_t packet_overhead = 1'000;
    double cover_duration = 0;  // 0 disables loop cover
    bool bucketing = true;
    bool record_trace = true;
    std::vector<JobConfig> jobs;

    std::size_t wire_size() const { return payload_size + packet_overhead; }
    void validate() const;  // throws ConfigError with a field-level message
};

RunConfig parse_config(const std::string& json_text);
std::string config_to_json(const RunConfig& config);

// Deterministic job input: input_tokens tokens of 4 bytes each drawn from the
// job seed.
protocol::Bytes make_input(const JobConfig& job, std::uint64_t run_seed);

struct RunOutput {
    std::vector<protocol::JobResult> results;
    mixnet::ObserverTrace trace;  // empty when record_trace is off
    std::string outcomes_jsonl;
    std::string trace_jsonl;
    std::string stores_jsonl;
};

// Full pipeline for every configured job; deterministic per seed. When
// out_dir is set, writes outcomes.jsonl, trace.jsonl, stores.jsonl there.
RunOutput run_e2e(const RunConfig& config, const std::optional<std::string>& out_dir = {});

struct DistinguisherReport {
    std::size_t trials = 0;
    std::size_t correct = 0;
    double accuracy = 0;
    double ci_lo = 0;   // exact binomial, 95%
    double ci_hi = 0;
    std::string features;
};

struct IouConfig {
    std::uint64_t seed = 1;
    unsigned bucket_index = 30;   // shared j; edge must clear both compute times
    double fast_compute = 0.5;    // seconds
    double slow_compute = 0.5;    // equal in the null-hypothesis mode
    unsigned input_tokens = 64;   // same size for both jobs
    bool bucketing = true;
    RunConfig base;               // topology and mixnet parameters
};

// The IO-U distinguisher game: per trial, flip b, pair the two jobs onto the
// two clients accordingly, and let a fixed feature battery over the observer
// trace guess b.
DistinguisherReport run_iou_experiment(const IouConfig& config, std::size_t trials);

// table3.csv and table4.csv under out_dir.
void emit_tables(const std::string& out_dir, double mu, double delta, int echoes = 5);

std::string outcome_to_json(const protocol::JobResult& result);

}  // namespace funion::harness
