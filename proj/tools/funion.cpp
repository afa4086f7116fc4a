// funion command-line front end: simulator runs, table reproduction, the
// IO-unlinkability experiment, and BACAP test-vector generation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "funion/bacap.hpp"
#include "funion/harness.hpp"
#include "funion/perfmodel.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitCheckFailed = 3;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw funion::harness::ConfigError("cannot read config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

int run_simulate(const std::string& config_path, std::optional<std::uint64_t> seed,
                 const std::string& out_dir, bool check) {
    funion::harness::RunConfig config = funion::harness::parse_config(read_file(config_path));
    if (seed) config.seed = *seed;

    const auto output = funion::harness::run_e2e(config, out_dir);

    std::size_t ok = 0, overflow = 0, failed = 0;
    for (const auto& r : output.results) {
        if (r.failed)
            ++failed;
        else if (r.status == funion::protocol::JobStatus::Ok)
            ++ok;
        else
            ++overflow;
    }
    std::cout << "jobs: " << output.results.size() << " ok: " << ok
              << " overflow: " << overflow << " failed: " << failed << "\n"
              << "trace events: " << output.trace.events.size() << "\n"
              << "outputs written to " << out_dir << "\n";

    if (check) {
        bool pass = failed == 0;
        for (const auto& ev : output.trace.events)
            if (ev.size != config.wire_size()) pass = false;
        for (const auto& r : output.results) {
            const bool overflowed = r.status == funion::protocol::JobStatus::Overflow;
            if (!r.failed && overflowed && !r.output.empty()) pass = false;
        }
        if (!pass) {
            std::cerr << "check failed: invariant violation in run output\n";
            return kExitCheckFailed;
        }
        std::cout << "check passed\n";
    }
    return kExitOk;
}

int run_iou(std::uint64_t seed, std::size_t trials, bool no_bucketing, unsigned bucket_index,
            double fast, double slow, const std::string& out_dir) {
    funion::harness::IouConfig config;
    config.seed = seed;
    config.bucket_index = bucket_index;
    config.fast_compute = fast;
    config.slow_compute = slow;
    config.bucketing = !no_bucketing;
    config.base.record_trace = true;

    const auto report = funion::harness::run_iou_experiment(config, trials);
    std::cout << "trials: " << report.trials << "\ncorrect: " << report.correct
              << "\naccuracy: " << report.accuracy << "\n95% CI: [" << report.ci_lo << ", "
              << report.ci_hi << "]\nfeatures: " << report.features << "\n";

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream out(std::filesystem::path(out_dir) / "iou.json");
        out << "{\"trials\":" << report.trials << ",\"correct\":" << report.correct
            << ",\"accuracy\":" << report.accuracy << ",\"ci_lo\":" << report.ci_lo
            << ",\"ci_hi\":" << report.ci_hi << "}\n";
    }
    return kExitOk;
}

int run_vectors(const std::string& seed_hex, unsigned count, const std::string& ctx) {
    using namespace funion::bacap;
    const Bytes seed = from_hex(seed_hex);
    auto [write_cap, read_cap] = generate_capability(seed);
    const Bytes ctx_bytes(ctx.begin(), ctx.end());
    for (unsigned index = 1; index <= count; ++index) {
        const BoxKeys keys = derive_box(read_cap, index, ctx);
        std::cout << seed_hex << " " << index << " " << to_hex(ctx_bytes) << " "
                  << to_hex(keys.box_id) << " " << to_hex(keys.enc_key) << " "
                  << to_hex(keys.nonce) << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"funion anonymous-inference protocol stack"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    bool check = false;

    auto* simulate = app.add_subcommand("simulate", "run the full pipeline from a JSON config");
    simulate->add_option("--config", config_path, "JSON run configuration")->required();
    simulate->add_option("--seed", seed_override, "override the config seed");
    simulate->add_option("--out-dir", out_dir, "output directory");
    simulate->add_flag("--check", check, "verify run invariants; exit 3 on failure");

    double mu = 0.20, delta = 0.2;
    int echoes = 5;
    std::string tables_dir = "out";
    auto* tables = app.add_subcommand("tables", "emit the latency and overhead tables as CSV");
    tables->add_option("--mu", mu, "mean per-hop delay, seconds");
    tables->add_option("--delta", delta, "bucket width, seconds");
    tables->add_option("--echoes", echoes, "echoes per inference");
    tables->add_option("--out-dir", tables_dir, "output directory");

    std::size_t trials = 2000;
    bool no_bucketing = false;
    unsigned bucket_index = 30;
    double fast = 0.5, slow = 0.5;
    std::string iou_dir;
    auto* iou = app.add_subcommand("iou", "input-output unlinkability distinguisher experiment");
    iou->add_option("--seed", seed, "experiment seed");
    iou->add_option("--trials", trials, "number of trials");
    iou->add_flag("--no-bucketing", no_bucketing, "ablate the latency-bucket release policy");
    iou->add_option("--bucket-index", bucket_index, "shared bucket index j");
    iou->add_option("--fast", fast, "fast job compute time, seconds");
    iou->add_option("--slow", slow, "slow job compute time, seconds");
    iou->add_option("--out-dir", iou_dir, "optional report directory");

    std::string seed_hex(128, '0');
    unsigned count = 8;
    std::string ctx{funion::bacap::kCtxIn};
    auto* vectors = app.add_subcommand("bacap-vectors", "emit capability-chain test vectors");
    vectors->add_option("--seed-hex", seed_hex, "64-byte capability seed, hex");
    vectors->add_option("--count", count, "number of chain indices");
    vectors->add_option("--ctx", ctx, "context string");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) return run_simulate(config_path, seed_override, out_dir, check);
        if (tables->parsed()) {
            funion::harness::emit_tables(tables_dir, mu, delta, echoes);
            std::cout << funion::perfmodel::table3_csv() << "\n"
                      << funion::perfmodel::table4_csv(mu, delta, echoes);
            return kExitOk;
        }
        if (iou->parsed())
            return run_iou(seed, trials, no_bucketing, bucket_index, fast, slow, iou_dir);
        if (vectors->parsed()) return run_vectors(seed_hex, count, ctx);
    } catch (const funion::harness::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const funion::protocol::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const funion::mixnet::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const funion::pigeonhole::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const funion::bacap::DomainError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
