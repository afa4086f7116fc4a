#include "funion/mixnet.hpp"

#include <cmath>
#include <sstream>
#include <tuple>

namespace funion::mixnet {

Topology Topology::regular(std::size_t gateways, std::size_t mixes_per_layer,
                           std::size_t services) {
    if (gateways == 0 || mixes_per_layer == 0 || services == 0)
        throw ConfigError("topology layers must be non-empty");
    Topology t;
    for (std::size_t i = 0; i < gateways; ++i) t.gateways.push_back("gw" + std::to_string(i));
    for (std::size_t layer = 0; layer < 3; ++layer)
        for (std::size_t i = 0; i < mixes_per_layer; ++i)
            t.mix_layers[layer].push_back("mix" + std::to_string(layer) + "_" +
                                          std::to_string(i));
    for (std::size_t i = 0; i < services; ++i) t.services.push_back("svc" + std::to_string(i));
    return t;
}

double StreamRng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double StreamRng::exponential(double mean) {
    // Inverse CDF on a (0, 1] draw.
    double u = uniform();
    return -mean * std::log1p(-u);
}

std::size_t StreamRng::uniform_index(std::size_t n) {
    // Modulo bias is negligible for the layer sizes in play, but rejection
    // sampling keeps the draw exact.
    const std::uint64_t bound = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
        v = engine_();
    } while (v >= bound);
    return static_cast<std::size_t>(v % n);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

Simulation::Simulation(Topology topology, DelayModel delays, std::uint64_t seed,
                       std::size_t wire_size)
    : topology_(std::move(topology)),
      delay_model_(delays),
      wire_size_(wire_size),
      delay_rng_(splitmix64(seed ^ 0x64656c6179ULL)),
      route_rng_(splitmix64(seed ^ 0x726f757465ULL)),
      cover_rng_(splitmix64(seed ^ 0x636f766572ULL)),
      app_rng_(splitmix64(seed ^ 0x617070ULL)) {
    if (delay_model_.mean_hop_delay <= 0) throw ConfigError("mean hop delay must be positive");
    for (const auto& layer : topology_.mix_layers)
        if (layer.empty()) throw ConfigError("empty mix layer");
    if (topology_.gateways.empty() || topology_.services.empty())
        throw ConfigError("topology needs gateways and services");
}

void Simulation::schedule_at(double t, std::function<void()> fn) {
    pending_.push({t, next_seq_++, std::move(fn)});
}

void Simulation::schedule_in(double dt, std::function<void()> fn) {
    schedule_at(now_ + dt, std::move(fn));
}

void Simulation::run() {
    while (!pending_.empty()) {
        PendingEvent ev = pending_.top();
        pending_.pop();
        now_ = ev.t;
        ev.fn();
    }
}

void Simulation::run_until(double t) {
    while (!pending_.empty() && pending_.top().t <= t) {
        PendingEvent ev = pending_.top();
        pending_.pop();
        now_ = ev.t;
        ev.fn();
    }
    now_ = t;
}

std::vector<NodeId> Simulation::build_route(const NodeId& entry, const NodeId& destination) {
    std::vector<NodeId> route;
    route.reserve(5);
    route.push_back(entry);
    for (const auto& layer : topology_.mix_layers)
        route.push_back(layer[route_rng_.uniform_index(layer.size())]);
    route.push_back(destination);
    return route;
}

void Simulation::send_echo(const NodeId& origin, const NodeId& entry,
                           const NodeId& destination, PacketKind kind,
                           std::function<void()> on_deliver,
                           std::function<void(EchoTiming)> on_reply) {
    const std::uint64_t packet_id = next_packet_id_++;
    const std::vector<NodeId> route = build_route(entry, destination);

    // Forward: origin->entry->m1->m2->m3->dst, reply retraces to the entry
    // node; the client-side pickup at the entry adds no delay.
    std::vector<std::pair<NodeId, NodeId>> links;
    links.emplace_back(origin, route[0]);
    for (std::size_t i = 0; i + 1 < route.size(); ++i)
        links.emplace_back(route[i], route[i + 1]);
    for (std::size_t i = route.size() - 1; i >= 1; --i)
        links.emplace_back(route[i], route[i - 1]);

    EchoTiming timing;
    timing.sent = now_;
    double t = now_;
    std::vector<double> arrival(links.size());
    std::vector<double> delay(links.size());
    for (std::size_t i = 0; i < links.size(); ++i) {
        delay[i] = delay_rng_.exponential(delay_model_.mean_hop_delay);
        t += delay[i];
        arrival[i] = t;
    }
    timing.delivered = arrival[4];
    timing.replied = arrival.back();

    if (record_hops_) {
        for (std::size_t i = 0; i < links.size(); ++i) {
            schedule_at(arrival[i], [this, link = links[i], packet_id, kind, d = delay[i]] {
                hop_log_.push_back({now_, link.first, link.second, wire_size_, packet_id, kind, d});
            });
        }
    }
    if (on_deliver) schedule_at(timing.delivered, std::move(on_deliver));
    if (on_reply)
        schedule_at(timing.replied,
                    [cb = std::move(on_reply), timing] { cb(timing); });
}

void Simulation::start_cover(const NodeId& client, const NodeId& gateway,
                             const CoverSource& source, double duration) {
    if (source.rate <= 0 || duration <= 0) return;
    const double horizon = now_ + duration;
    double t = now_;
    while (true) {
        t += cover_rng_.exponential(1.0 / source.rate);
        if (t >= horizon) break;
        schedule_at(t, [this, client, gateway] {
            const auto& services = topology_.services;
            const NodeId dst = services[cover_rng_.uniform_index(services.size())];
            send_echo(client, gateway, dst, PacketKind::LoopCover, nullptr, nullptr);
        });
    }
}

std::vector<double> cover_schedule(const CoverSource& source, double duration, StreamRng& rng) {
    std::vector<double> times;
    if (source.rate <= 0 || duration <= 0) return times;
    double t = 0;
    while (true) {
        t += rng.exponential(1.0 / source.rate);
        if (t >= duration) break;
        times.push_back(t);
    }
    return times;
}

ObserverTrace observer_view(const std::vector<HopEvent>& hop_log) {
    ObserverTrace trace;
    trace.events.reserve(hop_log.size());
    std::size_t expected_size = hop_log.empty() ? 0 : hop_log.front().size;
    for (const auto& hop : hop_log) {
        if (hop.size != expected_size)
            throw ConfigError("non-constant packet size in observed traffic");
        trace.events.push_back({hop.t, hop.src, hop.dst, hop.size});
    }
    return trace;
}

std::string trace_to_jsonl(const ObserverTrace& trace) {
    std::ostringstream out;
    for (const auto& ev : trace.events) {
        out << "{\"t\":" << ev.t << ",\"src\":\"" << ev.src << "\",\"dst\":\"" << ev.dst
            << "\",\"size\":" << ev.size << "}\n";
    }
    return out.str();
}

}  // namespace funion::mixnet
