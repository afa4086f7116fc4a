#include "funion/protocol.hpp"

#include <algorithm>
#include <cmath>

namespace funion::protocol {

namespace {

constexpr std::uint8_t kOutputData = 0x01;
constexpr std::uint8_t kOutputOverflow = 0x03;
// First output box gives 5 bytes to the kind tag + chunk count, continuation
// boxes 1 byte to the tag.
constexpr std::size_t kOutputChunkCapacity = kChunkBytes - 5;

void append_be32(Bytes& out, std::uint32_t v) {
    for (int i = 24; i >= 0; i -= 8) out.push_back(static_cast<std::uint8_t>(v >> i));
}

}  // namespace

double BucketGrid::edge(unsigned j) const {
    if (delta <= 0) throw ConfigError("bucket grid delta must be positive");
    if (j > edge_count) throw ConfigError("bucket index beyond grid");
    return j * delta;
}

bool BucketGrid::on_grid(double t) const {
    if (t < 0) return false;
    const double m = t / delta;
    return std::abs(m - std::round(m)) < 1e-9 && std::round(m) <= edge_count;
}

double round_up_to_bucket(double t, double delta) {
    if (t < 0 || delta <= 0) throw ConfigError("round_up_to_bucket needs t >= 0, delta > 0");
    // The slack keeps exact multiples (computed in floating point) on their
    // own edge instead of the next one.
    return std::ceil(t / delta - 1e-9) * delta;
}

BucketDecision wait_for_bucket_edge(double t_j, double t_finish, const BucketGrid& grid) {
    if (!grid.on_grid(t_j)) throw ConfigError("release edge is not on the public grid");
    if (t_finish < 0) throw ConfigError("negative finish time");
    if (t_finish >= t_j) return {JobStatus::Overflow, t_j};
    return {JobStatus::Ok, t_j};
}

std::vector<Bytes> split_chunks(const Bytes& input) {
    std::vector<Bytes> chunks;
    if (input.empty()) {
        chunks.emplace_back();
        return chunks;
    }
    for (std::size_t off = 0; off < input.size(); off += kChunkBytes) {
        const std::size_t len = std::min(kChunkBytes, input.size() - off);
        chunks.emplace_back(input.begin() + off, input.begin() + off + len);
    }
    return chunks;
}

std::vector<Bytes> encode_output(const Bytes& output) {
    const std::uint32_t count = output.empty()
        ? 1
        : static_cast<std::uint32_t>((output.size() + kOutputChunkCapacity - 1) /
                                     kOutputChunkCapacity);
    std::vector<Bytes> boxes;
    boxes.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Bytes payload;
        payload.push_back(kOutputData);
        if (i == 0) append_be32(payload, count);
        const std::size_t off = static_cast<std::size_t>(i) * kOutputChunkCapacity;
        const std::size_t len = std::min(kOutputChunkCapacity, output.size() - std::min(off, output.size()));
        payload.insert(payload.end(), output.begin() + off, output.begin() + off + len);
        boxes.push_back(std::move(payload));
    }
    return boxes;
}

Bytes encode_overflow_marker() { return Bytes{kOutputOverflow}; }

OutputHeader decode_output_header(const Bytes& box1_payload) {
    if (box1_payload.empty()) throw ProtocolError("empty output box");
    if (box1_payload[0] == kOutputOverflow) return {true, 0, {}};
    if (box1_payload[0] != kOutputData || box1_payload.size() < 5)
        throw ProtocolError("malformed output header");
    std::uint32_t count = 0;
    for (int i = 1; i <= 4; ++i) count = (count << 8) | box1_payload[i];
    if (count == 0) throw ProtocolError("zero output chunk count");
    return {false, count, Bytes(box1_payload.begin() + 5, box1_payload.end())};
}

void CapabilityRegistry::claim(const bacap::GroupElement& write_root) {
    if (!used_.insert(write_root).second)
        throw FreshnessViolation("write capability reused across jobs");
}

bool CapabilityRegistry::seen(const bacap::GroupElement& write_root) const {
    return used_.contains(write_root);
}

Network::Network(mixnet::Simulation& sim_, pigeonhole::PlacementConfig placement_,
                 std::vector<mixnet::NodeId> storage, std::vector<mixnet::NodeId> compute)
    : sim(sim_),
      placement(std::move(placement_)),
      storage_couriers(std::move(storage)),
      compute_couriers(std::move(compute)) {
    for (const auto& id : placement.replicas) replicas.emplace(id, pigeonhole::ReplicaStore(id));
    for (const auto& node : storage_couriers) couriers.emplace(node, pigeonhole::Courier{});
    for (const auto& node : compute_couriers) couriers.try_emplace(node);
}

pigeonhole::ReplicaStore* Network::lookup(const pigeonhole::ReplicaId& id) {
    auto it = replicas.find(id);
    return it == replicas.end() ? nullptr : &it->second;
}

pigeonhole::Courier& Network::courier(const mixnet::NodeId& node) {
    auto it = couriers.find(node);
    if (it == couriers.end()) throw ConfigError("unknown courier node: " + node);
    return it->second;
}

namespace {

struct Runner : std::enable_shared_from_this<Runner> {
    Network& net;
    CapabilityRegistry& registry;
    BucketGrid grid;
    mixnet::NodeId client;
    mixnet::NodeId gateway;
    JobSpec spec;
    std::function<void(JobResult)> done;

    JobResult result;
    bacap::WriteCapability write_in, write_out;
    bacap::ReadCapability read_in, read_out;
    double bucket_edge = 0;
    bool finished = false;

    // Transient per-phase state. Store acks get their own counter: E4 replies
    // can still be in flight while the client is already polling (E5).
    std::size_t pending_replies = 0;
    std::size_t pending_store_acks = 0;
    std::vector<Bytes> fetched;  // Charlie's view of the input chunks
    std::vector<Bytes> output_chunks;
    double dispatch_sent = 0;
    double fetch_done = 0;
    double poll_deadline = 0;

    Runner(Network& net_, CapabilityRegistry& registry_, const BucketGrid& grid_,
           mixnet::NodeId client_, mixnet::NodeId gateway_, JobSpec spec_,
           std::function<void(JobResult)> done_)
        : net(net_), registry(registry_), grid(grid_), client(std::move(client_)),
          gateway(std::move(gateway_)), spec(std::move(spec_)), done(std::move(done_)) {}

    mixnet::NodeId pick(const std::vector<mixnet::NodeId>& pool) {
        return pool[net.sim.app_rng().uniform_index(pool.size())];
    }

    void fail(const std::string& why) {
        if (finished) return;
        finished = true;
        result.failed = true;
        result.error = why;
        result.total_latency = net.sim.now() - result.start_time;
        done(result);
    }

    void finish() {
        if (finished) return;
        finished = true;
        result.total_latency = net.sim.now() - result.start_time;
        result.mix_time = result.echo_rtt[0] + result.echo_rtt[1] + result.echo_rtt[2] +
                          result.echo_rtt[3] + result.echo_rtt[4];
        done(result);
    }

    void start() {
        result.job_id = spec.job_id;
        result.start_time = net.sim.now();
        bucket_edge = grid.edge(spec.bucket_index);
        if (spec.bucket_index == 0) {
            fail("bucket index must be >= 1");
            return;
        }

        auto [w_in, r_in] = bacap::generate_capability(spec.input_cap_seed);
        auto [w_out, r_out] = bacap::generate_capability(spec.output_cap_seed);
        write_in = w_in;
        read_in = r_in;
        write_out = w_out;
        read_out = r_out;

        upload();
    }

    // E1: one echo per input chunk, all in flight together.
    void upload() {
        const auto chunks = split_chunks(spec.input);
        const mixnet::NodeId bob = pick(net.storage_couriers);
        pending_replies = chunks.size();
        auto self = shared_from_this();

        for (std::size_t i = 0; i < chunks.size(); ++i) {
            bacap::BoxRecord record;
            try {
                record = bacap::seal(write_in, i + 1, bacap::kCtxIn, chunks[i]);
            } catch (const bacap::BacapError& e) {
                fail(std::string("seal failed: ") + e.what());
                return;
            }
            result.input_box_ids.push_back(record.box_id);
            pigeonhole::Envelope env{pigeonhole::select_replicas(record.box_id, net.placement),
                                     pigeonhole::Envelope::Op::Put, record, std::nullopt,
                                     net.sim.wire_size()};
            net.sim.send_echo(
                client, gateway, bob, mixnet::PacketKind::Application,
                [self, bob, env = std::move(env)] {
                    auto reply = self->net.courier(bob).forward(
                        self->net.sim.now(), env,
                        [self](const pigeonhole::ReplicaId& id) { return self->net.lookup(id); });
                    if (!reply.ok()) self->fail("upload write rejected");
                },
                [self](mixnet::EchoTiming t) {
                    if (self->finished) return;
                    self->result.echo_rtt[0] += t.replied - t.sent;
                    if (--self->pending_replies == 0) self->dispatch();
                });
        }
    }

    // E2: job ticket (R_in, W_out, j, chunk count) to a uniformly chosen
    // compute courier.
    void dispatch() {
        try {
            registry.claim(write_out.root_public);
        } catch (const FreshnessViolation& e) {
            fail(e.what());
            return;
        }
        charlie_node_ = pick(net.compute_couriers);
        dispatch_sent = net.sim.now();
        auto self = shared_from_this();
        net.sim.send_echo(
            client, gateway, charlie_node_, mixnet::PacketKind::Application,
            [self] { self->charlie_begin(); },
            [self](mixnet::EchoTiming t) {
                if (self->finished) return;
                self->result.echo_rtt[1] = t.replied - t.sent;
                self->schedule_first_poll();
            });
    }

    // Charlie's loop, step 1: fetch the input boxes through the mixnet (E3).
    void charlie_begin() {
        result.dispatch_epoch = net.sim.now();
        const std::size_t chunk_count = result.input_box_ids.size();
        fetched.assign(chunk_count, {});
        pending_replies = chunk_count;
        auto self = shared_from_this();

        for (std::size_t i = 0; i < chunk_count; ++i) {
            const auto keys = bacap::derive_box(read_in, i + 1, bacap::kCtxIn);
            const mixnet::NodeId bob = pick(net.storage_couriers);
            const mixnet::NodeId charlie_entry = pick(net.sim.topology().gateways);
            pigeonhole::Envelope env{pigeonhole::select_replicas(keys.box_id, net.placement),
                                     pigeonhole::Envelope::Op::Get, std::nullopt, keys.box_id,
                                     net.sim.wire_size()};
            auto record = std::make_shared<std::optional<bacap::BoxRecord>>();
            net.sim.send_echo(
                charlie_node(), charlie_entry, bob, mixnet::PacketKind::Application,
                [self, bob, env = std::move(env), record] {
                    auto reply = self->net.courier(bob).forward(
                        self->net.sim.now(), env,
                        [self](const pigeonhole::ReplicaId& id) { return self->net.lookup(id); });
                    *record = reply.record;
                },
                [self, i, record](mixnet::EchoTiming t) {
                    if (self->finished) return;
                    self->result.echo_rtt[2] += t.replied - t.sent;
                    if (!record->has_value()) {
                        self->fail("input box unavailable on all replicas");
                        return;
                    }
                    try {
                        self->fetched[i] = bacap::open_record(self->read_in, i + 1,
                                                              bacap::kCtxIn, **record);
                    } catch (const bacap::BacapError& e) {
                        self->fail(std::string("input open failed: ") + e.what());
                        return;
                    }
                    if (--self->pending_replies == 0) self->compute();
                });
        }
    }

    // The compute courier this job was dispatched to, fixed at dispatch time.
    mixnet::NodeId charlie_node_;
    const mixnet::NodeId& charlie_node() const { return charlie_node_; }

    // Step 2: the simulated forward pass, then the bucket-edge wait.
    void compute() {
        fetch_done = net.sim.now();
        const double t_llm = spec.compute.duration();
        auto self = shared_from_this();
        net.sim.schedule_in(t_llm, [self] {
            const double t_finish = self->net.sim.now() - self->result.dispatch_epoch;
            if (self->spec.bucketing) {
                const auto decision =
                    wait_for_bucket_edge(self->bucket_edge, t_finish, self->grid);
                self->result.status = decision.status;
                self->result.release_offset = decision.release_time;
            } else {
                self->result.status = JobStatus::Ok;
                self->result.release_offset = t_finish;
            }
            const double release_at = self->result.dispatch_epoch + self->result.release_offset;
            self->result.release_time = release_at;
            self->result.compute_bucket_time = self->result.release_offset;
            self->net.sim.schedule_at(release_at, [self] { self->store_output(); });
        });
    }

    // Step 3/4 (E4): seal the result (or the overflow marker) under the
    // output capability and store it through the mixnet.
    void store_output() {
        std::vector<Bytes> payloads;
        if (result.status == JobStatus::Overflow) {
            payloads.push_back(encode_overflow_marker());
        } else {
            Bytes y;
            try {
                Bytes x;
                for (const auto& chunk : fetched) x.insert(x.end(), chunk.begin(), chunk.end());
                y = spec.compute.stub ? spec.compute.stub(x) : x;
            } catch (const std::exception& e) {
                fail(std::string("compute stub failed: ") + e.what());
                return;
            }
            payloads = encode_output(y);
        }

        const mixnet::NodeId ben = pick(net.storage_couriers);
        pending_store_acks = payloads.size();
        auto self = shared_from_this();
        for (std::size_t i = 0; i < payloads.size(); ++i) {
            bacap::BoxRecord record;
            try {
                record = bacap::seal(write_out, i + 1, bacap::kCtxOut, payloads[i]);
            } catch (const bacap::BacapError& e) {
                fail(std::string("output seal failed: ") + e.what());
                return;
            }
            result.output_box_ids.push_back(record.box_id);
            const mixnet::NodeId charlie_entry = pick(net.sim.topology().gateways);
            pigeonhole::Envelope env{pigeonhole::select_replicas(record.box_id, net.placement),
                                     pigeonhole::Envelope::Op::Put, record, std::nullopt,
                                     net.sim.wire_size()};
            net.sim.send_echo(
                charlie_node(), charlie_entry, ben, mixnet::PacketKind::Application,
                [self, ben, env = std::move(env)] {
                    auto reply = self->net.courier(ben).forward(
                        self->net.sim.now(), env,
                        [self](const pigeonhole::ReplicaId& id) { return self->net.lookup(id); });
                    if (!reply.ok()) self->fail("output write rejected");
                },
                [self](mixnet::EchoTiming t) {
                    if (self->finished) return;
                    self->result.echo_rtt[3] += t.replied - t.sent;
                    --self->pending_store_acks;
                });
        }
    }

    // E5: the client polls for the first output box, grid-aligned, then
    // enumerates the rest of the chain.
    void schedule_first_poll() {
        const double first = dispatch_sent + bucket_edge + grid.delta;
        poll_deadline = first + 3 * grid.horizon();
        auto self = shared_from_this();
        net.sim.schedule_at(first, [self] { self->poll(); });
    }

    void poll() {
        if (finished) return;
        if (net.sim.now() > poll_deadline) {
            fail("fetch timed out");
            return;
        }
        auto self = shared_from_this();
        fetch_box(1, [self](std::optional<Bytes> payload, double rtt) {
            if (self->finished) return;
            if (!payload) {
                ++self->result.poll_retries;
                self->net.sim.schedule_in(self->grid.delta, [self] { self->poll(); });
                return;
            }
            self->result.echo_rtt[4] += rtt;
            OutputHeader header;
            try {
                header = decode_output_header(*payload);
            } catch (const ProtocolError& e) {
                self->fail(e.what());
                return;
            }
            if (header.overflow) {
                self->result.status = JobStatus::Overflow;
                self->finish();
                return;
            }
            self->result.status = JobStatus::Ok;
            self->output_chunks.assign(header.chunk_count, {});
            self->output_chunks[0] = std::move(header.first_chunk);
            if (header.chunk_count == 1) {
                self->assemble_output();
                return;
            }
            self->pending_replies = header.chunk_count - 1;
            for (std::uint32_t idx = 2; idx <= header.chunk_count; ++idx) {
                self->fetch_box(idx, [self, idx](std::optional<Bytes> chunk, double rtt2) {
                    if (self->finished) return;
                    self->result.echo_rtt[4] += rtt2;
                    if (!chunk || chunk->empty() || (*chunk)[0] != kOutputData) {
                        self->fail("output chain truncated");
                        return;
                    }
                    self->output_chunks[idx - 1].assign(chunk->begin() + 1, chunk->end());
                    if (--self->pending_replies == 0) self->assemble_output();
                });
            }
        });
    }

    void assemble_output() {
        for (auto& chunk : output_chunks)
            result.output.insert(result.output.end(), chunk.begin(), chunk.end());
        finish();
    }

    // One Get echo for output box `index`; yields the opened payload or
    // nullopt when no replica has it yet.
    void fetch_box(std::uint64_t index,
                   std::function<void(std::optional<Bytes>, double)> on_result) {
        const auto keys = bacap::derive_box(read_out, index, bacap::kCtxOut);
        const mixnet::NodeId ben = pick(net.storage_couriers);
        pigeonhole::Envelope env{pigeonhole::select_replicas(keys.box_id, net.placement),
                                 pigeonhole::Envelope::Op::Get, std::nullopt, keys.box_id,
                                 net.sim.wire_size()};
        auto record = std::make_shared<std::optional<bacap::BoxRecord>>();
        auto self = shared_from_this();
        net.sim.send_echo(
            client, gateway, ben, mixnet::PacketKind::Application,
            [self, ben, env = std::move(env), record] {
                auto reply = self->net.courier(ben).forward(
                    self->net.sim.now(), env,
                    [self](const pigeonhole::ReplicaId& id) { return self->net.lookup(id); });
                *record = reply.record;
            },
            [self, index, record, on_result = std::move(on_result)](mixnet::EchoTiming t) {
                if (self->finished) return;
                const double rtt = t.replied - t.sent;
                if (!record->has_value()) {
                    on_result(std::nullopt, rtt);
                    return;
                }
                try {
                    on_result(bacap::open_record(self->read_out, index, bacap::kCtxOut,
                                                 **record),
                              rtt);
                } catch (const bacap::BacapError& e) {
                    self->fail(std::string("output integrity failure: ") + e.what());
                }
            });
    }
};

}  // namespace

void run_job(Network& net, CapabilityRegistry& registry, const BucketGrid& grid,
             const mixnet::NodeId& client, const mixnet::NodeId& gateway, JobSpec spec,
             std::function<void(JobResult)> done) {
    auto runner = std::make_shared<Runner>(net, registry, grid, client, gateway,
                                           std::move(spec), std::move(done));
    net.sim.schedule_in(0, [runner] { runner->start(); });
}

}  // namespace funion::protocol
