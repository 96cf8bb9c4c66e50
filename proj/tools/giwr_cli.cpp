// giwr: dataset generation, training runs and one-key sweeps.
//
// Exit codes: 0 ok, 2 usage or configuration error, 3 pre-flight contract failure,
// 4 numerical abort. Relative output paths resolve against $GIWR_OUT_DIR when it is set.

#include <openssl/evp.h>

#include <atomic>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "giwr/trainer/trainer.hpp"

namespace fs = std::filesystem;
using namespace giwr;

namespace {

enum Exit : int { ok = 0, usage = 2, preflight = 3, numerical = 4 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

fs::path output_root() {
    const char* env = std::getenv("GIWR_OUT_DIR");
    return env != nullptr && *env != '\0' ? fs::path(env) : fs::current_path();
}

fs::path resolve_out(const std::string& out) {
    const fs::path p(out);
    return p.is_absolute() ? p : output_root() / p;
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Same digest as `git hash-object` on a file holding these bytes.
std::string git_blob_sha1(const std::vector<char>& bytes) {
    const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
    EVP_DigestUpdate(ctx, header.data(), header.size());
    EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string seed_list(const std::vector<std::uint64_t>& seeds) {
    std::string s;
    for (auto x : seeds) s += (s.empty() ? "" : ",") + std::to_string(x);
    return s;
}

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

// "1,5,10" or "lo:hi:step" (inclusive, tolerant to rounding in the step).
std::vector<std::string> expand_values(const std::string& spec) {
    if (spec.find(':') == std::string::npos) {
        auto v = trainer::detail::split(spec);
        if (v.empty()) throw UsageError("--values is empty");
        return v;
    }
    const auto parts = trainer::detail::split(spec, ':');
    if (parts.size() != 3) throw UsageError("--values range must be lo:hi:step");
    const double lo = trainer::detail::to_double("values", parts[0]);
    const double hi = trainer::detail::to_double("values", parts[1]);
    const double step = trainer::detail::to_double("values", parts[2]);
    if (!(step > 0.0) || hi < lo) throw UsageError("--values range must have lo <= hi and step > 0");
    std::vector<std::string> out;
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    for (std::size_t k = 0; k < count; ++k) out.push_back(format_value(lo + static_cast<double>(k) * step));
    return out;
}

trainer::ExperimentConfig load_base_config(const std::string& path, const std::vector<std::string>& sets) {
    trainer::ExperimentConfig c = path.empty() ? trainer::ExperimentConfig{} : trainer::load_config(path);
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
        trainer::set_key(c, trainer::detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
    }
    return c;
}

// Trains every seed of `config` into `dir`: per-seed metrics and checkpoints, summary, manifest.
int run_config(trainer::ExperimentConfig config, const fs::path& dir, std::size_t jobs) {
    try {
        config.validate();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return usage;
    }
    const std::string started = utc_now();
    std::unique_ptr<envlab::Environment> env;
    datagen::Dataset data;
    try {
        env = envlab::make_env(config.env);
        data = trainer::dataset_for(config, *env);
        trainer::preflight(config, env->spec(), data);
    } catch (const ConfigError& e) {
        std::cerr << "pre-flight: " << e.what() << "\n";
        return preflight;
    } catch (const ParseError& e) {
        std::cerr << "pre-flight: " << e.what() << "\n";
        return preflight;
    } catch (const ContractError& e) {
        std::cerr << "pre-flight: " << e.what() << "\n";
        return preflight;
    }

    fs::create_directories(dir);
    write_text(dir / "config.txt", trainer::to_text(config));

    const std::size_t n = config.seeds.size();
    std::vector<std::optional<trainer::TrainResult>> results(n);
    std::vector<std::string> aborts(n);
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            const std::uint64_t seed = config.seeds[i];
            try {
                results[i] = trainer::train(config, *env, data, seed);
                const auto& last = results[i]->records.back();
                std::lock_guard lock(log_mutex);
                std::cout << "seed " << seed << ": iteration " << last.iteration << " return " << last.return_mean
                          << "\n";
            } catch (const NumericalAbort& e) {
                aborts[i] = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < std::min(jobs, n); ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::vector<std::string> files{"config.txt"};
    int status = ok;
    std::vector<std::vector<trainer::MetricsRecord>> runs;
    for (std::size_t i = 0; i < n; ++i) {
        const std::string tag = "seed_" + std::to_string(config.seeds[i]);
        if (!aborts[i].empty()) {
            write_text(dir / (tag + "_abort.txt"),
                       "seed=" + std::to_string(config.seeds[i]) + "\nreason=" + aborts[i] + "\n");
            files.push_back(tag + "_abort.txt");
            std::cerr << "numerical abort (seed " << config.seeds[i] << "): " << aborts[i] << "\n";
            status = numerical;
            continue;
        }
        const auto& r = *results[i];
        write_text(dir / (tag + ".csv"), trainer::metrics_csv(r.records));
        nets::save_checkpoint((dir / (tag + ".ckpt")).string(), r.models.params());
        files.push_back(tag + ".csv");
        files.push_back(tag + ".ckpt");
        runs.push_back(r.records);
    }
    if (!runs.empty()) {
        write_text(dir / "summary.csv", trainer::summary_csv(trainer::aggregate(runs)));
        files.push_back("summary.csv");
    }

    std::string manifest = "# giwr-manifest v1\n";
    char hash[20];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(trainer::config_hash(config)));
    manifest += std::string("config_hash=") + hash + "\n";
    manifest += "dataset_sha1=" + git_blob_sha1(datagen::encode(data)) + "\n";
    manifest += "dataset_source=" + (config.dataset.empty() ? "recipe:" + data.grade() : config.dataset) + "\n";
    manifest += "seeds=" + seed_list(config.seeds) + "\n";
    manifest += "started=" + started + "\n";
    manifest += "finished=" + utc_now() + "\n";
    std::string listing;
    for (const auto& f : files) listing += (listing.empty() ? "" : ",") + f;
    manifest += "files=" + listing + ",manifest.txt\n";
    write_text(dir / "manifest.txt", manifest);
    return status;
}

int cmd_gen_data(const std::string& env_kind, const std::string& grade, std::size_t n, bool sarsa, std::uint64_t seed,
                 std::optional<double> p, const std::string& out) {
    trainer::ExperimentConfig c;
    c.env = env_kind;
    c.grade = grade;
    c.data_n = n;
    c.sarsa = sarsa;
    c.data_seed = seed;
    if (grade == "mixed") {
        if (!p) throw UsageError("--grade mixed needs --p");
        c.p = *p;
    } else if (p) {
        throw UsageError("--p only applies to --grade mixed");
    } else {
        datagen::behavior_for_grade(grade);
    }
    const auto env = envlab::make_env(env_kind);
    const auto d = trainer::dataset_for(c, *env);
    const fs::path path = resolve_out(out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    datagen::save(d, path.string());
    std::cout << path.string() << ": grade=" << d.grade() << " count=" << d.size() << "\n";
    return ok;
}

int cmd_sweep_p(const std::string& env_kind, std::size_t n, bool sarsa, std::uint64_t seed, const std::string& out) {
    const fs::path dir = resolve_out(out);
    fs::create_directories(dir);
    for (int k = 0; k <= 10; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "p_%.1f.bin", k / 10.0);
        cmd_gen_data(env_kind, "mixed", n, sarsa, seed, k / 10.0, (dir / name).string());
    }
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"giwr: offline RL with generalized importance-weighted regression"};
    app.require_subcommand(1);

    std::string env_kind = "pointmass1d", grade = "expert", out;
    std::size_t n = 20000;
    bool sarsa = false;
    std::uint64_t seed = 0;
    std::optional<double> p;

    auto* gen = app.add_subcommand("gen-data", "generate one dataset");
    gen->add_option("--env", env_kind, "pointmass1d, pointmass2d or discrete_chain");
    gen->add_option("--grade", grade, "expert, medium, replay, random or mixed");
    gen->add_option("--n", n, "number of transitions")->check(CLI::PositiveNumber);
    gen->add_flag("--sarsa", sarsa, "store the next action of every transition");
    gen->add_option("--seed", seed, "generation seed");
    gen->add_option("--p", p, "expert portion for --grade mixed")->check(CLI::Range(0.0, 1.0));
    gen->add_option("--out", out, "output file")->required();

    auto* sweep_p = app.add_subcommand("sweep-p", "generate mixed datasets for p = 0.0, 0.1, ..., 1.0");
    sweep_p->add_option("--env", env_kind, "pointmass1d, pointmass2d or discrete_chain");
    sweep_p->add_option("--n", n, "transitions per source dataset")->check(CLI::PositiveNumber);
    sweep_p->add_flag("--sarsa", sarsa, "store the next action of every transition");
    sweep_p->add_option("--seed", seed, "generation seed");
    sweep_p->add_option("--out", out, "output directory")->required();

    std::string config_path, seed_set, algorithm;
    std::optional<double> cql_alpha;
    std::vector<std::string> sets;
    std::size_t jobs = 1;
    auto* train = app.add_subcommand("train", "train every seed of a config");
    auto* sweep = app.add_subcommand("sweep", "train one run directory per value of a single key");
    for (auto* sub : {train, sweep}) {
        sub->add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
        sub->add_option("--seed-set", seed_set, "comma-separated seeds, e.g. 0,1,2,3");
        sub->add_option("--algorithm", algorithm, "base, giwr, rtg or bc");
        sub->add_option("--cql-alpha", cql_alpha, "conservative penalty scale");
        sub->add_option("--set", sets, "extra key=value overrides, applied last");
        sub->add_option("--jobs", jobs, "parallel seeds")->check(CLI::PositiveNumber);
        sub->add_option("--out", out, "output directory")->required();
    }
    std::vector<std::string> sweep_keys;
    std::string sweep_values;
    sweep->add_option("--key", sweep_keys, "the one config key to sweep")->required();
    sweep->add_option("--values", sweep_values, "comma list or lo:hi:step")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : usage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(env_kind, grade, n, sarsa, seed, p, out);
        if (sweep_p->parsed()) return cmd_sweep_p(env_kind, n, sarsa, seed, out);

        std::vector<std::string> overrides;
        if (!algorithm.empty()) overrides.push_back("algorithm=" + algorithm);
        if (cql_alpha) overrides.push_back("cql_alpha=" + trainer::detail::fmt(*cql_alpha));
        if (!seed_set.empty()) overrides.push_back("seeds=" + seed_set);
        overrides.insert(overrides.end(), sets.begin(), sets.end());
        const trainer::ExperimentConfig base = load_base_config(config_path, overrides);

        if (train->parsed()) return run_config(base, resolve_out(out), jobs);

        if (sweep_keys.size() != 1 || sweep_keys[0].find(',') != std::string::npos) {
            throw UsageError("sweep takes exactly one --key");
        }
        const std::string& key = sweep_keys[0];
        if (key == "seeds" || key == "preset") throw UsageError("cannot sweep '" + key + "'");
        int status = ok;
        for (const auto& value : expand_values(sweep_values)) {
            trainer::ExperimentConfig point = base;
            trainer::set_key(point, key, value);
            const int code = run_config(point, resolve_out(out) / (key + "=" + value), jobs);
            if (code == usage || code == preflight) return code;
            status = std::max(status, code);
        }
        return status;
    } catch (const UsageError& e) {
        std::cerr << "usage: " << e.what() << "\n";
        return usage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return usage;
    } catch (const ParseError& e) {
        std::cerr << "pre-flight: " << e.what() << "\n";
        return preflight;
    } catch (const ContractError& e) {
        std::cerr << "pre-flight: " << e.what() << "\n";
        return preflight;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
