#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "paracycle/chain.hpp"
#include "paracycle/errors.hpp"
#include "paracycle/gateway.hpp"
#include "paracycle/io.hpp"
#include "paracycle/metrics.hpp"
#include "paracycle/perturb.hpp"
#include "paracycle/rng.hpp"
#include "paracycle/runner.hpp"
#include "paracycle/signals.hpp"
#include "paracycle/sim.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitBackend = 3;

using paracycle::Chain;
namespace fs = std::filesystem;
namespace gw = paracycle::gateway;
namespace io = paracycle::io;
namespace metrics = paracycle::metrics;
namespace perturb = paracycle::perturb;
namespace rng = paracycle::rng;
namespace runner = paracycle::runner;
namespace signals = paracycle::signals;
namespace sim = paracycle::sim;

std::vector<std::string> read_lines(const std::string& path) {
    std::string content = io::read_file(path);
    std::vector<std::string> lines;
    std::string line;
    std::istringstream in(content);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw paracycle::IoError("cannot create directory " + dir + ": " + ec.message());
}

std::vector<int> sorted_unique(std::vector<int> ks) {
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    return ks;
}

// ---- run ----------------------------------------------------------------

struct RunArgs {
    std::string config_path;
    std::string sources_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::string backend_kind;
    std::string base_url;
    std::string model;
};

int do_run(const RunArgs& args) {
    runner::FileConfig fc = runner::load_config(args.config_path);
    if (args.seed.has_value()) fc.run.seed = *args.seed;
    if (!args.backend_kind.empty())
        fc.backend.kind = args.backend_kind == "http" ? gw::BackendKind::http : gw::BackendKind::mock;
    if (!args.base_url.empty()) fc.backend.base_url = args.base_url;
    if (!args.model.empty()) fc.backend.model = args.model;

    std::vector<std::string> sources;
    for (auto& line : read_lines(args.sources_path))
        if (!line.empty()) sources.push_back(std::move(line));
    if (sources.empty()) throw paracycle::DomainError("no sources in " + args.sources_path);

    std::unique_ptr<gw::Backend> backend = gw::make_backend(fc.backend);
    std::string backend_name = fc.backend.kind == gw::BackendKind::http ? "http" : "mock";
    std::string model_name = fc.backend.model.empty() ? backend_name : fc.backend.model;

    runner::BatchResult result = runner::run_batch(sources, fc.run, *backend, backend_name,
                                                   model_name);

    ensure_dir(args.out_dir);
    std::string chains_path = args.out_dir + "/" + result.manifest.run_id + ".chains.jsonl";
    std::string manifest_path = args.out_dir + "/" + result.manifest.run_id + ".manifest.json";
    paracycle::save_chains(result.chains, chains_path);
    io::write_file_atomic(manifest_path, runner::manifest_to_json(result.manifest));

    int complete = 0, truncated = 0, failed = 0;
    for (const auto& e : result.manifest.entries) {
        if (e.status == runner::ChainStatus::complete) ++complete;
        else if (e.status == runner::ChainStatus::truncated) ++truncated;
        else ++failed;
    }
    std::printf("run %s: %d complete, %d truncated, %d failed\n", result.manifest.run_id.c_str(),
                complete, truncated, failed);
    std::printf("wrote %s and %s\n", chains_path.c_str(), manifest_path.c_str());
    if (result.chains.empty()) {
        std::fprintf(stderr, "every chain failed; see %s\n", manifest_path.c_str());
        return kExitBackend;
    }
    return kExitOk;
}

// ---- analyze ------------------------------------------------------------

struct AnalyzeArgs {
    std::string in_path;
    std::string out_dir;
    std::vector<int> taus;
    std::vector<int> lags;
    bool matrix = false;
    bool similarity = false;
    bool ppl = false;
    bool vendi = false;
    std::string granularity = "char";
    std::string backend_kind = "mock";
    std::string base_url;
    std::string model;
};

gw::BackendConfig backend_config_from(const std::string& kind, const std::string& base_url,
                                      const std::string& model) {
    gw::BackendConfig cfg;
    cfg.kind = kind == "http" ? gw::BackendKind::http : gw::BackendKind::mock;
    cfg.base_url = base_url;
    cfg.model = model;
    return cfg;
}

int do_analyze(const AnalyzeArgs& args) {
    if (args.taus.empty() && args.lags.empty() && !args.matrix && !args.similarity && !args.ppl &&
        !args.vendi) {
        std::fprintf(stderr, "analyze: select at least one metric "
                             "(--matrix, --tau K, --lag K, --similarity, --ppl, --vendi)\n");
        return kExitUsage;
    }
    metrics::Granularity g = metrics::granularity_from_string(args.granularity);
    std::vector<Chain> chains = paracycle::load_chains(args.in_path);
    if (chains.empty()) throw paracycle::DomainError("no chains in " + args.in_path);

    std::unique_ptr<gw::Backend> backend;
    if (args.ppl || args.vendi)
        backend = gw::make_backend(backend_config_from(args.backend_kind, args.base_url, args.model));

    ensure_dir(args.out_dir);
    int files = 0;
    auto emit = [&](const std::string& path, const std::string& content) {
        io::write_file_atomic(path, content);
        ++files;
    };

    for (const Chain& chain : chains) {
        std::string base = args.out_dir + "/" + chain.run_id + "." + chain.chain_id;

        if (args.matrix) emit(base + ".matrix.csv", metrics::difference_matrix(chain, g).to_csv());

        if (!args.taus.empty()) {
            nlohmann::ordered_json j;
            j["run_id"] = chain.run_id;
            j["chain_id"] = chain.chain_id;
            j["granularity"] = metrics::to_string(g);
            nlohmann::ordered_json taus;
            for (int k : sorted_unique(args.taus))
                taus[std::to_string(k)] = metrics::periodicity_degree(chain, k, g).tau;
            j["tau"] = std::move(taus);
            emit(base + ".tau.json", j.dump(2) + "\n");
        }

        for (int k : sorted_unique(args.lags))
            emit(base + ".lag" + std::to_string(k) + ".csv",
                 io::series_csv("step", "distance", metrics::lag_distance_series(chain, k, g)));

        if (args.similarity)
            emit(base + ".similarity.csv",
                 io::series_csv("step", "cosine", metrics::similarity_to_origin_series(chain)));

        if (args.ppl) {
            signals::PerplexitySeries stored = signals::stored_forward_perplexity_series(chain);
            emit(base + ".forward_ppl.csv", io::series_csv("step", "perplexity", stored.forward));
            const runner::PromptTemplate& tpl = runner::find_prompt(chain.steps[1].prompt_id);
            signals::PromptWrapper wrap = [&tpl](const std::string& text) {
                // history templates get the same text in both slots; the
                // reverse score only needs the instruction wrapping
                return runner::build_prompt(tpl, text,
                                            tpl.history_capable()
                                                ? std::optional<std::string>(text)
                                                : std::nullopt);
            };
            signals::ContinuationScorer scorer = [&](const std::string& context,
                                                     const std::string& continuation) {
                return backend->score_continuation(context, continuation);
            };
            try {
                signals::PerplexitySeries series = signals::perplexity_series(chain, scorer, wrap);
                emit(base + ".reverse_ppl.csv",
                     io::series_csv("step", "perplexity", series.reverse));
            } catch (const paracycle::CapabilityError& e) {
                std::fprintf(stderr, "note: reverse perplexity skipped for %s.%s: %s\n",
                             chain.run_id.c_str(), chain.chain_id.c_str(), e.what());
            }
        }

        if (args.vendi) {
            signals::Embedder embedder = [&](const std::vector<std::string>& texts) {
                return backend->embed(texts);
            };
            emit(base + ".vendi.csv",
                 io::series_csv("step", "vendi",
                                signals::diversity_series(chain, embedder).per_step));
        }
    }
    std::printf("analyzed %zu chain(s); wrote %d file(s) to %s\n", chains.size(), files,
                args.out_dir.c_str());
    return kExitOk;
}

// ---- simulate / verify-bound --------------------------------------------

struct SpaceArgs {
    int n_states = 40;
    int dim = 16;
    std::uint64_t seed = 0;
    double beta_logit = 4.0;
    double lambda = 1.0;
    double eta = 0.5;
    double delta_min = 0.02;
    bool history = false;
    std::string affinity = "random";  // random | pairs | ppl
};

sim::SyntheticSpace build_space_from(const SpaceArgs& args) {
    return sim::build_space(args.n_states, args.dim, args.seed);
}

sim::OperatorConfig operator_config_from(const SpaceArgs& args, const sim::SyntheticSpace& space) {
    sim::OperatorConfig cfg;
    cfg.beta_logit = args.beta_logit;
    cfg.lambda = args.lambda;
    cfg.eta = args.eta;
    cfg.delta_min = args.delta_min;
    cfg.history_mode = args.history;
    cfg.seed = rng::split_seed(args.seed, 1);
    if (args.affinity == "random")
        cfg.base_affinity = sim::random_affinity(args.n_states, rng::split_seed(args.seed, 2));
    else if (args.affinity == "pairs")
        cfg.base_affinity = sim::pair_affinity(args.n_states, 1.0, 0.0);
    else if (args.affinity == "ppl")
        cfg.base_affinity = sim::ppl_biased_affinity(space, 1.0);
    else
        throw paracycle::FormatError("unknown affinity kind: " + args.affinity);
    return cfg;
}

void add_space_options(CLI::App* cmd, SpaceArgs& args) {
    cmd->add_option("--n-states", args.n_states, "number of states");
    cmd->add_option("--dim", args.dim, "embedding dimension");
    cmd->add_option("--seed", args.seed, "master seed");
    cmd->add_option("--beta-logit", args.beta_logit, "softmax sharpness (> 0)");
    cmd->add_option("--lambda", args.lambda, "reinforcement gain (>= 0)");
    cmd->add_option("--eta", args.eta, "weight increment per transition (>= 0)");
    cmd->add_option("--delta-min", args.delta_min, "forbidden radius around anchors (>= 0)");
    cmd->add_flag("--history", args.history, "condition transitions on the previous state too");
    cmd->add_option("--affinity", args.affinity, "base affinity: random, pairs, or ppl")
        ->check(CLI::IsMember({"random", "pairs", "ppl"}));
}

struct SimulateArgs {
    SpaceArgs space;
    int rounds = 15;
    int s0 = 0;
    std::vector<int> taus{2};
    std::string out_dir;
    std::string name = "sim";
    int homog_steps = 0;
    int corpus_size = 1000;
    int paraphrase_per_step = 100;
    int add_per_step = 100;
};

int do_simulate(const SimulateArgs& args) {
    sim::SyntheticSpace space = build_space_from(args.space);
    sim::OperatorConfig cfg = operator_config_from(args.space, space);
    sim::SimChain chain = sim::simulate_chain(space, cfg, args.s0, args.rounds);

    ensure_dir(args.out_dir);
    std::string csv = "step,state,sigma,sigma_hat\n";
    for (std::size_t i = 0; i < chain.states.size(); ++i) {
        csv += std::to_string(i) + "," + std::to_string(chain.states[i]);
        if (i == 0) {
            csv += ",,\n";
        } else {
            csv += "," + io::format_fixed6(chain.sigma[i - 1]) + "," +
                   io::format_fixed6(chain.sigma_hat[i - 1]) + "\n";
        }
    }
    std::string chain_path = args.out_dir + "/" + args.name + ".chain.csv";
    io::write_file_atomic(chain_path, csv);
    std::printf("wrote %s\n", chain_path.c_str());

    for (int k : sorted_unique(args.taus))
        std::printf("tau[%d] = %s\n", k, io::format_fixed6(
                                             sim::sim_periodicity(space, chain.states, k)).c_str());

    if (args.homog_steps > 0) {
        sim::HomogenizationResult h = sim::homogenization_sim(
            space, cfg, args.corpus_size, args.paraphrase_per_step, args.add_per_step,
            args.homog_steps, rng::split_seed(args.space.seed, 3));
        std::vector<std::pair<int, double>> rows;
        for (std::size_t t = 0; t < h.std_series.size(); ++t)
            rows.emplace_back(static_cast<int>(t), h.std_series[t]);
        std::string std_path = args.out_dir + "/" + args.name + ".homog_std.csv";
        io::write_file_atomic(std_path, io::series_csv("step", "std", rows));
        std::printf("wrote %s\n", std_path.c_str());
    }
    return kExitOk;
}

struct VerifyBoundArgs {
    SpaceArgs space;
    int step = 4;
    double alpha = 0.05;
    double beta = 0.10;
    double theta = 0.5;
    double k_slope = 1.0;
    double epsilon = 0.1;
    std::string out_path;
};

int do_verify_bound(const VerifyBoundArgs& args) {
    sim::SyntheticSpace space = build_space_from(args.space);
    sim::OperatorConfig cfg = operator_config_from(args.space, space);
    sim::BoundParams params;
    params.alpha = args.alpha;
    params.beta = args.beta;
    params.theta = args.theta;
    params.k_slope = args.k_slope;
    params.epsilon = args.epsilon;
    sim::BoundReport report = sim::verify_bound(space, cfg, args.step, params);
    std::string json = sim::bound_report_to_json(report);
    std::fputs(json.c_str(), stdout);
    if (!args.out_path.empty()) {
        io::write_file_atomic(args.out_path, json);
        std::printf("wrote %s\n", args.out_path.c_str());
    }
    return kExitOk;
}

// ---- perturb ------------------------------------------------------------

struct PerturbArgs {
    std::string in_path;
    std::string out_path;
    std::string method = "synonym_replace";
    double rate = 0.05;
    std::string lexicon_path;
    std::uint64_t seed = 0;
};

int do_perturb(const PerturbArgs& args) {
    perturb::PerturbSpec spec;
    spec.method = perturb::method_from_string(args.method);
    spec.rate = args.rate;
    if (!args.lexicon_path.empty()) spec.lexicon = perturb::load_lexicon(args.lexicon_path);
    spec.validate();

    std::vector<std::string> lines = read_lines(args.in_path);
    std::string out;
    int edited = 0, skipped = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].find_first_not_of(" \t") == std::string::npos) {
            out += lines[i];
            out += '\n';
            ++skipped;
            continue;
        }
        perturb::PerturbSpec line_spec = spec;
        line_spec.seed = rng::split_seed(args.seed, i);
        out += perturb::apply(lines[i], line_spec).text;
        out += '\n';
        ++edited;
    }
    io::write_file_atomic(args.out_path, out);
    std::printf("perturbed %d line(s), passed %d blank line(s) through -> %s\n", edited, skipped,
                args.out_path.c_str());
    return kExitOk;
}

// ---- report -------------------------------------------------------------

struct ReportArgs {
    std::string in_path;
    std::string out_dir;
    std::vector<int> taus{1, 2, 3};
    std::string granularity = "char";
};

int do_report(const ReportArgs& args) {
    metrics::Granularity g = metrics::granularity_from_string(args.granularity);
    std::vector<Chain> chains = paracycle::load_chains(args.in_path);
    if (chains.empty()) throw paracycle::DomainError("no chains in " + args.in_path);
    ensure_dir(args.out_dir);

    std::vector<int> ks = sorted_unique(args.taus);
    std::string md = "# Transformation chain report\n\n";
    md += "- input: " + args.in_path + "\n";
    md += "- chains: " + std::to_string(chains.size()) + "\n";
    md += "- granularity: " + metrics::to_string(g) + "\n\n";

    md += "| run_id | chain_id | rounds |";
    for (int k : ks) md += " tau_" + std::to_string(k) + " |";
    md += " sigma_first | sigma_last | sigma_delta |\n";
    md += "|---|---|---|";
    for (std::size_t i = 0; i < ks.size(); ++i) md += "---|";
    md += "---|---|---|\n";

    for (const Chain& chain : chains) {
        md += "| " + chain.run_id + " | " + chain.chain_id + " | " +
              std::to_string(chain.rounds()) + " |";
        for (int k : ks) {
            try {
                md += " " + io::format_fixed6(metrics::periodicity_degree(chain, k, g).tau) + " |";
            } catch (const paracycle::DomainError&) {
                md += " n/a |";
            }
        }
        try {
            signals::PerplexitySeries s = signals::stored_forward_perplexity_series(chain);
            double first = s.forward.front().second;
            double last = s.forward.back().second;
            md += " " + io::format_fixed6(first) + " | " + io::format_fixed6(last) + " | " +
                  io::format_fixed6(last - first) + " |\n";
        } catch (const paracycle::DomainError&) {
            md += " n/a | n/a | n/a |\n";
        }
        io::write_file_atomic(args.out_dir + "/" + chain.run_id + "." + chain.chain_id +
                                  ".matrix.csv",
                              metrics::difference_matrix(chain, g).to_csv());
    }
    md += "\nDifference matrices: one `<run_id>.<chain_id>.matrix.csv` per chain, in this "
          "directory.\n";
    io::write_file_atomic(args.out_dir + "/report.md", md);
    std::printf("wrote %s/report.md and %zu matrix file(s)\n", args.out_dir.c_str(), chains.size());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Successive text-transformation chains: generation, metrics, and a synthetic "
                 "attractor simulator"};
    app.require_subcommand(1);

    RunArgs run_args;
    CLI::App* run_cmd = app.add_subcommand("run", "run transformation chains from a config file");
    run_cmd->add_option("--config", run_args.config_path, "JSON config file")->required();
    run_cmd->add_option("--sources", run_args.sources_path, "text file, one source per line")
        ->required();
    run_cmd->add_option("--out", run_args.out_dir, "output directory")->required();
    run_cmd->add_option("--seed", run_args.seed, "override run.seed");
    run_cmd->add_option("--backend", run_args.backend_kind, "override backend.kind")
        ->check(CLI::IsMember({"http", "mock"}));
    run_cmd->add_option("--base-url", run_args.base_url, "override backend.base_url");
    run_cmd->add_option("--model", run_args.model, "override backend.model");

    AnalyzeArgs analyze_args;
    CLI::App* analyze_cmd = app.add_subcommand("analyze", "compute metrics over saved chains");
    analyze_cmd->add_option("--in", analyze_args.in_path, "chains JSONL file")->required();
    analyze_cmd->add_option("--out", analyze_args.out_dir, "output directory")->required();
    analyze_cmd->add_option("--tau", analyze_args.taus, "periodicity degree k (repeatable)");
    analyze_cmd->add_option("--lag", analyze_args.lags, "lag-k distance series (repeatable)");
    analyze_cmd->add_flag("--matrix", analyze_args.matrix, "pairwise difference matrix CSV");
    analyze_cmd->add_flag("--similarity", analyze_args.similarity,
                          "cosine similarity to origin (stored embeddings)");
    analyze_cmd->add_flag("--ppl", analyze_args.ppl,
                          "forward perplexity from stored logprobs + reverse via backend");
    analyze_cmd->add_flag("--vendi", analyze_args.vendi, "per-step beam diversity (Vendi score)");
    analyze_cmd->add_option("--granularity", analyze_args.granularity, "char or word")
        ->check(CLI::IsMember({"char", "word"}));
    analyze_cmd->add_option("--backend", analyze_args.backend_kind,
                            "backend for reverse perplexity and embeddings")
        ->check(CLI::IsMember({"http", "mock"}));
    analyze_cmd->add_option("--base-url", analyze_args.base_url, "http backend base URL");
    analyze_cmd->add_option("--model", analyze_args.model, "http backend model");

    SimulateArgs sim_args;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "run the synthetic attractor simulator");
    add_space_options(sim_cmd, sim_args.space);
    sim_cmd->add_option("--rounds", sim_args.rounds, "chain length M");
    sim_cmd->add_option("--s0", sim_args.s0, "initial state");
    sim_cmd->add_option("--tau", sim_args.taus, "periodicity degree k to print (repeatable)");
    sim_cmd->add_option("--out", sim_args.out_dir, "output directory")->required();
    sim_cmd->add_option("--name", sim_args.name, "output file prefix");
    sim_cmd->add_option("--homog-steps", sim_args.homog_steps,
                        "also run the corpus homogenization simulation for this many steps");
    sim_cmd->add_option("--corpus-size", sim_args.corpus_size, "homogenization corpus size");
    sim_cmd->add_option("--paraphrase-per-step", sim_args.paraphrase_per_step,
                        "entries paraphrased per step");
    sim_cmd->add_option("--add-per-step", sim_args.add_per_step, "fresh entries added per step");

    VerifyBoundArgs vb_args;
    vb_args.space.n_states = 12;
    CLI::App* vb_cmd = app.add_subcommand("verify-bound",
                                          "exact-enumeration check of the similarity lower bound");
    add_space_options(vb_cmd, vb_args.space);
    vb_cmd->add_option("--step", vb_args.step, "step index i (>= 2)");
    vb_cmd->add_option("--alpha", vb_args.alpha, "limit forward perplexity (rescaled axis)");
    vb_cmd->add_option("--beta", vb_args.beta, "reverse perplexity bound (rescaled axis)");
    vb_cmd->add_option("--theta", vb_args.theta, "slack (> 0)");
    vb_cmd->add_option("--k", vb_args.k_slope, "similarity-perplexity slope");
    vb_cmd->add_option("--epsilon", vb_args.epsilon, "perplexity band half-width");
    vb_cmd->add_option("--out", vb_args.out_path, "also write the JSON report here");

    PerturbArgs perturb_args;
    CLI::App* perturb_cmd = app.add_subcommand("perturb", "perturb a text file line by line");
    perturb_cmd->add_option("--in", perturb_args.in_path, "input text file")->required();
    perturb_cmd->add_option("--out", perturb_args.out_path, "output text file")->required();
    perturb_cmd->add_option("--method", perturb_args.method,
                            "synonym_replace, word_swap, or insert_delete")
        ->check(CLI::IsMember({"synonym_replace", "word_swap", "insert_delete"}));
    perturb_cmd->add_option("--rate", perturb_args.rate, "edit budget as a fraction of words");
    perturb_cmd->add_option("--lexicon", perturb_args.lexicon_path,
                            "synonym lexicon TSV (word TAB comma-separated synonyms)");
    perturb_cmd->add_option("--seed", perturb_args.seed, "seed");

    ReportArgs report_args;
    CLI::App* report_cmd = app.add_subcommand("report", "markdown summary plus difference matrices");
    report_cmd->add_option("--in", report_args.in_path, "chains JSONL file")->required();
    report_cmd->add_option("--out", report_args.out_dir, "output directory")->required();
    report_cmd->add_option("--tau", report_args.taus, "periodicity degrees for the table");
    report_cmd->add_option("--granularity", report_args.granularity, "char or word")
        ->check(CLI::IsMember({"char", "word"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (run_cmd->parsed()) return do_run(run_args);
        if (analyze_cmd->parsed()) return do_analyze(analyze_args);
        if (sim_cmd->parsed()) return do_simulate(sim_args);
        if (vb_cmd->parsed()) return do_verify_bound(vb_args);
        if (perturb_cmd->parsed()) return do_perturb(perturb_args);
        if (report_cmd->parsed()) return do_report(report_args);
    } catch (const paracycle::BackendError& e) {
        std::fprintf(stderr, "backend error: %s\n", e.what());
        return kExitBackend;
    } catch (const paracycle::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return kExitUsage;
}
