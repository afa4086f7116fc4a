#include "funion/pigeonhole.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstring>
#include <sstream>

namespace funion::pigeonhole {

namespace {

std::uint64_t ring_hash(const void* data, std::size_t len) {
    unsigned char out[16];
    crypto_generichash(out, sizeof out, static_cast<const unsigned char*>(data), len, nullptr, 0);
    std::uint64_t h = 0;
    for (int i = 0; i < 8; ++i) h = (h << 8) | out[i];
    return h;
}

}  // namespace

PlacementConfig PlacementConfig::build(std::vector<ReplicaId> replicas, unsigned copies,
                                       unsigned virtual_nodes) {
    if (replicas.empty()) throw ConfigError("placement needs at least one replica");
    if (copies < 1 || copies > replicas.size())
        throw ConfigError("placement copies k must satisfy 1 <= k <= n");
    if (virtual_nodes < 1) throw ConfigError("virtual_nodes must be >= 1");

    PlacementConfig cfg;
    cfg.replicas = std::move(replicas);
    cfg.copies = copies;
    cfg.virtual_nodes = virtual_nodes;
    cfg.ring.reserve(cfg.replicas.size() * virtual_nodes);
    for (const auto& id : cfg.replicas) {
        for (unsigned v = 0; v < virtual_nodes; ++v) {
            std::string point = id;
            point.push_back('#');
            point += std::to_string(v);
            cfg.ring.emplace_back(ring_hash(point.data(), point.size()), id);
        }
    }
    std::sort(cfg.ring.begin(), cfg.ring.end());
    return cfg;
}

std::vector<ReplicaId> select_replicas(const GroupElement& box_id, const PlacementConfig& cfg) {
    if (cfg.ring.empty() || cfg.copies > cfg.replicas.size())
        throw ConfigError("invalid placement config");

    const std::uint64_t point = ring_hash(box_id.data(), box_id.size());
    auto it = std::lower_bound(cfg.ring.begin(), cfg.ring.end(),
                               std::make_pair(point, ReplicaId{}));
    std::vector<ReplicaId> out;
    out.reserve(cfg.copies);
    for (std::size_t step = 0; step < cfg.ring.size() && out.size() < cfg.copies; ++step) {
        if (it == cfg.ring.end()) it = cfg.ring.begin();
        if (std::find(out.begin(), out.end(), it->second) == out.end()) out.push_back(it->second);
        ++it;
    }
    return out;
}

PutStatus ReplicaStore::put(const BoxRecord& record) {
    if (!bacap::verify_record(record)) return PutStatus::RejectBadSignature;
    auto [it, inserted] = records_.try_emplace(record.box_id, record);
    if (inserted) return PutStatus::Ack;
    if (it->second.ciphertext == record.ciphertext && it->second.sig == record.sig)
        return PutStatus::Ack;
    return PutStatus::RejectConflict;
}

const BoxRecord* ReplicaStore::get(const GroupElement& box_id) const {
    auto it = records_.find(box_id);
    return it == records_.end() ? nullptr : &it->second;
}

void gossip_sync(ReplicaStore& a, ReplicaStore& b, const PlacementConfig& cfg) {
    auto push = [&cfg](const ReplicaStore& from, ReplicaStore& to) {
        for (const auto& [box_id, record] : from.records()) {
            if (to.get(box_id) != nullptr) continue;
            const auto placement = select_replicas(box_id, cfg);
            if (std::find(placement.begin(), placement.end(), to.id()) != placement.end())
                to.put(record);
        }
    };
    push(a, b);
    push(b, a);
}

CourierReply Courier::forward(double now, const Envelope& envelope,
                              const ReplicaLookup& lookup) {
    log_.push_back({now, envelope.wire_size});

    if (envelope.op == Envelope::Op::Get) {
        bool reached_any = false;
        for (const auto& id : envelope.targets) {
            ReplicaStore* store = lookup(id);
            if (store == nullptr) continue;
            reached_any = true;
            if (const BoxRecord* record = store->get(*envelope.box_id))
                return {CourierReply::Status::Ok, *record};
        }
        if (!reached_any) return {CourierReply::Status::AllReplicasFailed, std::nullopt};
        return {CourierReply::Status::NotFound, std::nullopt};
    }

    unsigned acks = 0;
    unsigned reached = 0;
    for (const auto& id : envelope.targets) {
        ReplicaStore* store = lookup(id);
        if (store == nullptr) continue;
        ++reached;
        if (store->put(*envelope.record) == PutStatus::Ack) ++acks;
    }
    if (reached == 0) return {CourierReply::Status::AllReplicasFailed, std::nullopt};
    const unsigned quorum = (static_cast<unsigned>(envelope.targets.size()) + 1) / 2;
    if (acks >= quorum) return {CourierReply::Status::Ok, std::nullopt};
    return {CourierReply::Status::QuorumFailed, std::nullopt};
}

std::string Courier::serialized_log() const {
    std::ostringstream out;
    for (const auto& entry : log_)
        out << "{\"t\":" << entry.time << ",\"size\":" << entry.size << "}\n";
    return out.str();
}

std::string dump_store(const ReplicaStore& store) {
    std::ostringstream out;
    for (const auto& [box_id, record] : store.records()) {
        out << "{\"replica_id\":\"" << store.id() << "\",\"box_id_hex\":\""
            << bacap::to_hex(box_id) << "\",\"record_hex\":\""
            << bacap::to_hex(bacap::encode_record(record)) << "\"}\n";
    }
    return out.str();
}

}  // namespace funion::pigeonhole
