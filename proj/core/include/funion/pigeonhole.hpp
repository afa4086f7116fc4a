#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "funion/bacap.hpp"

// Replica key-value stores indexed by Box-ID with signature-gated writes,
// deterministic k-of-n placement on a consistent-hash ring, anti-entropy
// gossip, and stateless couriers that forward opaque envelopes.

namespace funion::pigeonhole {

using ReplicaId = std::string;
using bacap::BoxRecord;
using bacap::GroupElement;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PlacementConfig {
    std::vector<ReplicaId> replicas;
    unsigned copies = 3;          // k
    unsigned virtual_nodes = 64;  // ring points per replica
    std::vector<std::pair<std::uint64_t, ReplicaId>> ring;  // sorted by hash point

    static PlacementConfig build(std::vector<ReplicaId> replicas, unsigned copies,
                                 unsigned virtual_nodes = 64);
};

// Clockwise-successor walk from hash(box_id), skipping replicas already taken.
std::vector<ReplicaId> select_replicas(const GroupElement& box_id, const PlacementConfig& cfg);

enum class PutStatus { Ack, RejectBadSignature, RejectConflict };

class ReplicaStore {
public:
    explicit ReplicaStore(ReplicaId id) : id_(std::move(id)) {}

    const ReplicaId& id() const { return id_; }

    // First verified write wins; identical re-writes are idempotent.
    PutStatus put(const BoxRecord& record);
    const BoxRecord* get(const GroupElement& box_id) const;

    const std::map<GroupElement, BoxRecord>& records() const { return records_; }

private:
    ReplicaId id_;
    std::map<GroupElement, BoxRecord> records_;
};

// Anti-entropy exchange: each side adopts peer records whose placement set
// contains it. Idempotent; writes still go through the signature gate.
void gossip_sync(ReplicaStore& a, ReplicaStore& b, const PlacementConfig& cfg);

struct Envelope {
    enum class Op { Put, Get };
    std::vector<ReplicaId> targets;  // courier-visible
    Op op;
    // Sealed to the replicas; the courier never inspects these.
    std::optional<BoxRecord> record;       // Put
    std::optional<GroupElement> box_id;    // Get
    std::size_t wire_size = 0;
};

// What the courier is allowed to log per envelope.
struct CourierLogEntry {
    double time;
    std::size_t size;
};

struct CourierReply {
    enum class Status { Ok, NotFound, QuorumFailed, AllReplicasFailed };
    Status status;
    std::optional<BoxRecord> record;
    bool ok() const { return status == Status::Ok; }
};

class Courier {
public:
    using ReplicaLookup = std::function<ReplicaStore*(const ReplicaId&)>;

    // Get: targets in order until first hit. Put: all targets, success at
    // ceil(k/2) acks.
    CourierReply forward(double now, const Envelope& envelope, const ReplicaLookup& lookup);

    const std::vector<CourierLogEntry>& log() const { return log_; }
    std::string serialized_log() const;

private:
    std::vector<CourierLogEntry> log_;
};

// JSON-lines store dump: {replica_id, box_id_hex, record_hex} per record.
std::string dump_store(const ReplicaStore& store);

}  // namespace funion::pigeonhole
