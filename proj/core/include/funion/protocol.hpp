#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "funion/bacap.hpp"
#include "funion/mixnet.hpp"
#include "funion/pigeonhole.hpp"

// The five-echo store -> compute -> store workflow: Upload, Dispatch,
// Compute-fetch, Compute-store, Fetch, with the latency-bucket release
// policy governing when results become visible.

namespace funion::protocol {

using bacap::Bytes;

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : ProtocolError {
    using ProtocolError::ProtocolError;
};
// A write capability offered for a second job.
struct FreshnessViolation : ProtocolError {
    using ProtocolError::ProtocolError;
};

// Public latency grid: edges t_m = m * delta for m in 0..edge_count.
struct BucketGrid {
    double delta = 0.2;
    unsigned edge_count = 50;

    double edge(unsigned j) const;  // throws ConfigError if j > edge_count
    double horizon() const { return edge(edge_count); }
    bool on_grid(double t) const;
};

enum class JobStatus { Ok, Overflow };

struct BucketDecision {
    JobStatus status;
    double release_time;  // always the chosen edge t_j
};

// Smallest multiple of delta >= t.
double round_up_to_bucket(double t, double delta);

// Release strictly at the client-chosen edge t_j; OVERFLOW iff the
// computation was not done by then (t_finish >= t_j).
BucketDecision wait_for_bucket_edge(double t_j, double t_finish, const BucketGrid& grid);

// Parametric compute cost: t_LLM = ttft + n_out * itl, with a pluggable
// deterministic function standing in for the forward pass.
struct ComputeModel {
    double ttft = 0;
    double itl = 0;
    unsigned output_tokens = 0;
    std::function<Bytes(const Bytes&)> stub;

    double duration() const { return ttft + output_tokens * itl; }
};

inline constexpr std::size_t kBytesPerToken = 4;
inline constexpr std::size_t kChunkTokens = 7'500;
inline constexpr std::size_t kChunkBytes = kChunkTokens * kBytesPerToken;  // 30 000

// Input chunking: ceil(size / kChunkBytes) chunks, one box each; empty input
// is a single empty chunk.
std::vector<Bytes> split_chunks(const Bytes& input);

// Output-chain framing. Box 1 carries a header (kind + chunk count); an
// overflow marker is a single distinguished box.
std::vector<Bytes> encode_output(const Bytes& output);
Bytes encode_overflow_marker();

struct OutputHeader {
    bool overflow;
    std::uint32_t chunk_count;  // 0 when overflow
    Bytes first_chunk;
};
OutputHeader decode_output_header(const Bytes& box1_payload);

// Enforces the capability-freshness rule: no write root is used for two jobs.
class CapabilityRegistry {
public:
    void claim(const bacap::GroupElement& write_root);
    bool seen(const bacap::GroupElement& write_root) const;

private:
    std::set<bacap::GroupElement> used_;
};

// Shared fabric a run executes against: the simulator plus the storage side.
struct Network {
    mixnet::Simulation& sim;
    pigeonhole::PlacementConfig placement;
    std::map<pigeonhole::ReplicaId, pigeonhole::ReplicaStore> replicas;
    std::map<mixnet::NodeId, pigeonhole::Courier> couriers;  // per service node
    std::vector<mixnet::NodeId> storage_couriers;
    std::vector<mixnet::NodeId> compute_couriers;

    Network(mixnet::Simulation& sim, pigeonhole::PlacementConfig placement,
            std::vector<mixnet::NodeId> storage, std::vector<mixnet::NodeId> compute);

    pigeonhole::ReplicaStore* lookup(const pigeonhole::ReplicaId& id);
    pigeonhole::Courier& courier(const mixnet::NodeId& node);
};

struct JobSpec {
    std::uint64_t job_id = 0;
    unsigned bucket_index = 1;
    ComputeModel compute;
    Bytes input;
    std::array<std::uint8_t, 64> input_cap_seed{};
    std::array<std::uint8_t, 64> output_cap_seed{};
    bool bucketing = true;  // ablation hook; release at t_finish when false
};

struct JobResult {
    std::uint64_t job_id = 0;
    JobStatus status = JobStatus::Ok;
    bool failed = false;
    std::string error;

    double start_time = 0;       // upload send
    double dispatch_epoch = 0;   // Charlie's receipt of the job ticket
    double release_time = 0;     // absolute time the result leaves Charlie
    double release_offset = 0;   // release relative to dispatch_epoch
    double total_latency = 0;    // fetch completion - upload send
    double mix_time = 0;         // sum of the five pipeline echo round trips
    double compute_bucket_time = 0;

    std::array<double, 5> echo_rtt{};  // E1..E5
    int poll_retries = 0;

    Bytes output;
    std::vector<bacap::GroupElement> input_box_ids;
    std::vector<bacap::GroupElement> output_box_ids;
};

// Event-driven execution of one job against the fabric; `done` fires inside
// the simulation when the client has its result (or the job failed).
void run_job(Network& net, CapabilityRegistry& registry, const BucketGrid& grid,
             const mixnet::NodeId& client, const mixnet::NodeId& gateway, JobSpec spec,
             std::function<void(JobResult)> done);

}  // namespace funion::protocol
