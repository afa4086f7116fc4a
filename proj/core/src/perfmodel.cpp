#include "funion/perfmodel.hpp"

#include <cmath>
#include <sstream>

#include "funion/protocol.hpp"

namespace funion::perfmodel {

std::vector<Scenario> canonical_scenarios() {
    return {
        {"Balanced", 200, 200, 0.03278, 0.01911},
        {"Medium", 1000, 1000, 0.10320, 0.01931},
        {"Output-heavy", 500, 2000, 0.07182, 0.01926},
        {"Input-heavy", 5000, 500, 0.36811, 0.01994},
    };
}

std::pair<double, double> echo_stats(int hops, double mu) {
    if (hops < 1 || mu <= 0) throw PerfError("echo_stats needs hops >= 1, mu > 0");
    return {hops * mu, hops * mu * mu};
}

double llm_latency(const Scenario& s) {
    if (s.ttft < 0 || s.itl < 0) throw PerfError("negative latency parameters");
    return s.ttft + s.output_tokens * s.itl;
}

std::vector<OverheadRow> overhead_table(const std::vector<Scenario>& scenarios, double mu,
                                        double delta, int echoes) {
    const double mix_time = echoes * echo_stats(mixnet::kHopsPerEcho, mu).first;
    std::vector<OverheadRow> rows;
    rows.reserve(scenarios.size());
    for (const auto& s : scenarios) {
        OverheadRow row;
        row.name = s.name;
        row.llm_rounded = protocol::round_up_to_bucket(llm_latency(s), delta);
        row.mix_time = mix_time;
        row.total = row.llm_rounded + row.mix_time;
        row.mix_pct = static_cast<int>(std::lround(100.0 * row.mix_time / row.total));
        rows.push_back(row);
    }
    return rows;
}

double bandwidth_budget(double lambda_s, double packet_bytes, double seconds) {
    if (lambda_s < 0 || packet_bytes < 0 || seconds < 0)
        throw PerfError("bandwidth_budget needs non-negative inputs");
    return lambda_s * packet_bytes * seconds;
}

std::uint64_t max_inference_rate(double lambda_s, unsigned packets_per_inference,
                                 double seconds) {
    if (packets_per_inference < 1) throw PerfError("packets_per_inference must be >= 1");
    if (lambda_s < 0 || seconds < 0) throw PerfError("negative rate inputs");
    return static_cast<std::uint64_t>(std::floor(lambda_s * seconds / packets_per_inference));
}

HiddenStateSize hidden_state_size(std::uint64_t batch, std::uint64_t seq_len,
                                  std::uint64_t hidden_dim, std::uint64_t bytes_per_elem,
                                  std::uint64_t layers, double link_bps) {
    if (link_bps <= 0) throw PerfError("link_bps must be positive");
    HiddenStateSize out{};
    out.per_layer_bytes = batch * seq_len * hidden_dim * bytes_per_elem;
    out.total_bytes = out.per_layer_bytes * layers;
    out.per_layer_transfer_s = static_cast<double>(out.per_layer_bytes) * 8.0 / link_bps;
    out.full_pass_transfer_s = static_cast<double>(out.total_bytes) * 8.0 / link_bps;
    return out;
}

std::string table3_csv() {
    std::ostringstream out;
    out << "scenario,n_in,n_out,ttft_ms,itl_ms,t_llm_s\n";
    out.setf(std::ios::fixed);
    for (const auto& s : canonical_scenarios()) {
        out.precision(2);
        out << s.name << "," << s.input_tokens << "," << s.output_tokens << ","
            << s.ttft * 1000.0 << "," << s.itl * 1000.0 << "," << llm_latency(s) << "\n";
    }
    return out.str();
}

std::string table4_csv(double mu, double delta, int echoes) {
    std::ostringstream out;
    out << "scenario,t_llm_rounded_s,t_mix_s,total_s,mix_pct\n";
    out.setf(std::ios::fixed);
    for (const auto& row : overhead_table(canonical_scenarios(), mu, delta, echoes)) {
        out.precision(2);
        out << row.name << "," << row.llm_rounded << ",";
        out.precision(1);
        out << row.mix_time << ",";
        out.precision(2);
        out << row.total << "," << row.mix_pct << "\n";
    }
    return out.str();
}

}  // namespace funion::perfmodel
