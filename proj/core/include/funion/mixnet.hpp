#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

// Deterministic discrete-event model of the Echomix transport: constant-size
// packets, a layered topology, independent exponential per-hop delays,
// Poisson loop-cover traffic, and the global passive adversary's view.

namespace funion::mixnet {

using NodeId = std::string;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Topology {
    std::vector<NodeId> gateways;
    std::array<std::vector<NodeId>, 3> mix_layers;
    std::vector<NodeId> services;

    // gw0..  mixL_i..  svc0..
    static Topology regular(std::size_t gateways, std::size_t mixes_per_layer,
                            std::size_t services);
};

struct DelayModel {
    double mean_hop_delay = 0.20;  // mu, seconds
    double rate() const { return 1.0 / mean_hop_delay; }
};

struct CoverSource {
    double rate = 2.5;  // lambda_s, packets/second
};

enum class PacketKind { Application, LoopCover };

// One link traversal as recorded internally. The observer projection strips
// everything but (t, link, size).
struct HopEvent {
    double t;
    NodeId src;
    NodeId dst;
    std::size_t size;
    std::uint64_t packet_id;
    PacketKind kind;
    double hop_delay;
};

struct TraceEvent {
    double t;
    NodeId src;
    NodeId dst;
    std::size_t size;
};

struct ObserverTrace {
    std::vector<TraceEvent> events;
};

// GPA projection; throws if packet sizes are not all identical.
ObserverTrace observer_view(const std::vector<HopEvent>& hop_log);

std::string trace_to_jsonl(const ObserverTrace& trace);

// Deterministic per-purpose random stream (mt19937_64 with hand-rolled
// real-valued draws so output is identical across platforms).
class StreamRng {
public:
    explicit StreamRng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    double uniform();  // [0, 1)
    double exponential(double mean);
    std::size_t uniform_index(std::size_t n);

private:
    std::mt19937_64 engine_;
};

struct EchoTiming {
    double sent = 0;
    double delivered = 0;
    double replied = 0;
};

inline constexpr std::size_t kDefaultPayloadCapacity = 30'000;
inline constexpr std::size_t kDefaultWireSize = 31'000;
inline constexpr int kHopsPerEcho = 9;

class Simulation {
public:
    Simulation(Topology topology, DelayModel delays, std::uint64_t seed,
               std::size_t wire_size = kDefaultWireSize);

    double now() const { return now_; }
    const Topology& topology() const { return topology_; }
    const DelayModel& delays() const { return delay_model_; }
    std::size_t wire_size() const { return wire_size_; }

    void schedule_at(double t, std::function<void()> fn);
    void schedule_in(double dt, std::function<void()> fn);
    void run();
    void run_until(double t);

    // Uniform picks per mix layer: [entry, m1, m2, m3, destination].
    std::vector<NodeId> build_route(const NodeId& entry, const NodeId& destination);

    // Round trip: 5 forward links (origin -> entry -> m1 -> m2 -> m3 -> dst),
    // 4 reply links retracing to the entry node, one Exp(1/mu) delay and one
    // hop event per link. All 9 delays are drawn up front at send time.
    // on_deliver runs at arrival at dst, on_reply at the entry-side return.
    void send_echo(const NodeId& origin, const NodeId& entry, const NodeId& destination,
                   PacketKind kind, std::function<void()> on_deliver,
                   std::function<void(EchoTiming)> on_reply);

    // Poisson loop-cover emissions to uniformly chosen services.
    void start_cover(const NodeId& client, const NodeId& gateway, const CoverSource& source,
                     double duration);

    const std::vector<HopEvent>& hop_log() const { return hop_log_; }
    std::uint64_t packets_sent() const { return next_packet_id_; }

    // Hop logging costs memory on multi-million-echo runs; delay draws and
    // event order are unaffected by turning it off.
    void set_record_hops(bool enabled) { record_hops_ = enabled; }

    StreamRng& delay_rng() { return delay_rng_; }
    StreamRng& route_rng() { return route_rng_; }
    StreamRng& cover_rng() { return cover_rng_; }
    StreamRng& app_rng() { return app_rng_; }

private:
    struct PendingEvent {
        double t;
        std::uint64_t seq;
        std::function<void()> fn;
        bool operator>(const PendingEvent& other) const {
            return std::tie(t, seq) > std::tie(other.t, other.seq);
        }
    };

    Topology topology_;
    DelayModel delay_model_;
    std::size_t wire_size_;
    double now_ = 0;
    std::uint64_t next_seq_ = 0;
    std::uint64_t next_packet_id_ = 0;
    std::priority_queue<PendingEvent, std::vector<PendingEvent>, std::greater<>> pending_;
    std::vector<HopEvent> hop_log_;
    bool record_hops_ = true;

    StreamRng delay_rng_;
    StreamRng route_rng_;
    StreamRng cover_rng_;
    StreamRng app_rng_;
};

// Standalone Poisson emission schedule over [0, duration).
std::vector<double> cover_schedule(const CoverSource& source, double duration, StreamRng& rng);

}  // namespace funion::mixnet
