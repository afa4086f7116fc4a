#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Closed-form latency, overhead, and bandwidth arithmetic, independent of the
// simulator so the two paths can be cross-checked.

namespace funion::perfmodel {

struct PerfError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Scenario {
    std::string name;
    unsigned input_tokens;
    unsigned output_tokens;
    double ttft;  // seconds
    double itl;   // seconds per token
};

// The canonical Llama-3.3-70B rows (4xH100, fp16, TP=4).
std::vector<Scenario> canonical_scenarios();

struct OverheadRow {
    std::string name;
    double llm_rounded;  // compute time rounded up to the bucket grid
    double mix_time;
    double total;
    int mix_pct;  // nearest integer percentage
};

// Sum of `hops` i.i.d. Exp(1/mu) delays: mean = hops*mu, variance = hops*mu^2.
std::pair<double, double> echo_stats(int hops, double mu);

double llm_latency(const Scenario& s);

std::vector<OverheadRow> overhead_table(const std::vector<Scenario>& scenarios, double mu,
                                        double delta, int echoes = 5);

// Decimal units (kB = 1000 B), matching the cover-traffic budget arithmetic.
double bandwidth_budget(double lambda_s, double packet_bytes, double seconds);

std::uint64_t max_inference_rate(double lambda_s, unsigned packets_per_inference,
                                 double seconds);

// Binary sizing of transformer activations. Sizes in bytes; transfer times in
// seconds over a link of `link_bps` bits/second.
struct HiddenStateSize {
    std::uint64_t per_layer_bytes;
    std::uint64_t total_bytes;
    double per_layer_transfer_s;
    double full_pass_transfer_s;
};

HiddenStateSize hidden_state_size(std::uint64_t batch, std::uint64_t seq_len,
                                  std::uint64_t hidden_dim, std::uint64_t bytes_per_elem,
                                  std::uint64_t layers, double link_bps);

std::string table3_csv();
std::string table4_csv(double mu, double delta, int echoes = 5);

}  // namespace funion::perfmodel
