#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "modforge/augment.hpp"
#include "modforge/corpus.hpp"
#include "modforge/curation.hpp"
#include "modforge/dedup.hpp"
#include "modforge/emission.hpp"
#include "modforge/error.hpp"
#include "modforge/evaluation.hpp"
#include "modforge/io.hpp"
#include "modforge/log.hpp"
#include "modforge/pipeline.hpp"

namespace fs = std::filesystem;
using namespace modforge;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;
constexpr int kExitProvider = 4;

struct ConfigFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::string config;
    std::string cache_dir;
    bool dry_run = false;
    std::string log = "text";
    bool verbose = false;
    std::string aliases;
};

struct ProviderFlags {
    std::string mock_script;
    std::string model = "default";
    std::string auth_env;
    int rpm = 60;
    double timeout_s = 60.0;
    int retries = 3;
};

DatasetFormat format_for(const std::string& path, const std::string& flag) {
    if (flag == "csv") return DatasetFormat::Csv;
    if (flag == "jsonl") return DatasetFormat::Jsonl;
    return fs::path(path).extension() == ".csv" ? DatasetFormat::Csv : DatasetFormat::Jsonl;
}

std::optional<PipelineConfig> config_from(const Globals& g) {
    if (g.config.empty()) return std::nullopt;
    try {
        return load_config(g.config);
    } catch (const Error& e) {
        throw ConfigFailure(e.what());
    }
}

json read_json(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigFailure(path + ": " + e.what());
    }
}

/// `[{"canonical": "InternetFraud", "display": "Internet Fraud", "aliases": [...]}, ...]`
std::vector<CategoryInfo> read_extra_categories(const std::string& path) {
    std::vector<CategoryInfo> out;
    for (const auto& j : read_json(path)) {
        CategoryInfo info;
        info.canonical = j.at("canonical").get<std::string>();
        info.display = j.value("display", info.canonical);
        info.aliases = j.value("aliases", std::vector<std::string>{});
        out.push_back(std::move(info));
    }
    return out;
}

class Session {
public:
    Session(const Globals& g, const ProviderFlags& pf, const Taxonomy& taxonomy) : flags_(pf) {
        config_ = config_from(g);
        if (config_) {
            if (!g.cache_dir.empty()) config_->cache = fs::path(g.cache_dir);
            gateway_ = make_gateway(*config_);
        } else {
            GatewayOptions opt;
            if (!g.cache_dir.empty()) opt.cache_dir = fs::path(g.cache_dir);
            gateway_ = std::make_unique<Gateway>(opt);
        }
        if (!gateway_->has_provider("mock")) {
            MockScript script;
            if (!pf.mock_script.empty()) script = MockScript::from_json(read_json(pf.mock_script));
            gateway_->register_mock(std::move(script), "mock");
        }
        templates_ = std::make_unique<PromptTemplates>(taxonomy);
        if (config_ && config_->templates) templates_->load_overrides(*config_->templates);
    }

    Gateway& gateway() { return *gateway_; }
    const PromptTemplates& templates() const { return *templates_; }

    /// Configured ids, "mock", or an ad-hoc "remote:<url>" chat endpoint.
    const ProviderHandle& provider(const std::string& id) {
        if (gateway_->has_provider(id)) return gateway_->provider(id);
        if (id.starts_with("remote:")) {
            ProviderHandle h;
            h.id = id;
            h.endpoint = id.substr(7);
            h.model = flags_.model;
            h.auth_env = flags_.auth_env;
            h.rpm = flags_.rpm;
            h.timeout_s = flags_.timeout_s;
            h.max_retries = flags_.retries;
            try {
                h.validate();
            } catch (const Error& e) {
                throw ConfigFailure(e.what());
            }
            return gateway_->add_provider(h);
        }
        throw ConfigFailure("unknown provider '" + id + "'");
    }

private:
    ProviderFlags flags_;
    std::optional<PipelineConfig> config_;
    std::unique_ptr<Gateway> gateway_;
    std::unique_ptr<PromptTemplates> templates_;
};

void print_prompts(const std::vector<RawSample>& samples, const std::vector<ChatExchange>& prompts) {
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        std::cout << json{{"sample_id", samples[i].id}, {"messages", prompts[i].to_messages()}}.dump()
                  << '\n';
    }
}

std::vector<ChatExchange> render_all(const Dataset& d, const PromptTemplates& t, PromptKind kind) {
    std::vector<ChatExchange> out;
    for (const auto& s : d.samples()) out.push_back(t.render(kind, s.text));
    return out;
}

void add_provider_flags(CLI::App* cmd, ProviderFlags& pf) {
    cmd->add_option("--mock-script", pf.mock_script, "JSON script for the built-in mock provider")
        ->check(CLI::ExistingFile);
    cmd->add_option("--model", pf.model, "model name for remote:<url> providers");
    cmd->add_option("--auth-env", pf.auth_env, "env var holding the API key for remote:<url>");
    cmd->add_option("--rpm", pf.rpm, "requests per minute for remote:<url>");
    cmd->add_option("--timeout", pf.timeout_s, "request timeout in seconds for remote:<url>");
    cmd->add_option("--retries", pf.retries, "retries per call for remote:<url>");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"modforge: content-moderation CoT dataset pipeline"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "pipeline config (TOML, or JSON by extension)");
    app.add_option("--cache-dir", g.cache_dir, "response cache directory");
    app.add_flag("--dry-run", g.dry_run, "render prompts without calling any provider");
    app.add_option("--log", g.log, "log format")->check(CLI::IsMember({"text", "json"}));
    app.add_option("--aliases", g.aliases, "extra category aliases (JSON object)")
        ->check(CLI::ExistingFile);
    app.add_flag("-v,--verbose", g.verbose, "debug logging");

    ProviderFlags pf;

    // corpus
    auto* corpus = app.add_subcommand("corpus", "inspect or split a dataset");
    corpus->require_subcommand(1);
    std::string c_in, c_fmt = "auto";
    auto* c_stats = corpus->add_subcommand("stats", "per-category counts");
    c_stats->add_option("input", c_in)->required()->check(CLI::ExistingFile);
    c_stats->add_option("--format", c_fmt)->check(CLI::IsMember({"auto", "jsonl", "csv"}));
    std::size_t train_per = 0, test_per = 0;
    std::uint64_t split_seed = 0;
    std::string train_out, test_out;
    auto* c_split = corpus->add_subcommand("split", "stratified train/test split");
    c_split->add_option("input", c_in)->required()->check(CLI::ExistingFile);
    c_split->add_option("--format", c_fmt)->check(CLI::IsMember({"auto", "jsonl", "csv"}));
    c_split->add_option("--train-per-cat", train_per)->required();
    c_split->add_option("--test-per-cat", test_per)->required();
    c_split->add_option("--seed", split_seed);
    c_split->add_option("--train-out", train_out)->required();
    c_split->add_option("--test-out", test_out)->required();

    // dedup
    auto* dedup = app.add_subcommand("dedup", "cluster per category and keep one per cluster");
    std::string d_in, d_out, d_fmt = "auto", d_encoder = "hash", d_report;
    std::size_t d_target = 1450;
    std::uint64_t d_seed = 0;
    bool d_cosine = false;
    dedup->add_option("input", d_in)->required()->check(CLI::ExistingFile);
    dedup->add_option("--format", d_fmt)->check(CLI::IsMember({"auto", "jsonl", "csv"}));
    dedup->add_option("-o,--out", d_out)->required();
    dedup->add_option("--target-per-cat", d_target, "samples kept per category");
    dedup->add_option("--encoder", d_encoder, "hash, hash:<dim> or remote:<url>");
    dedup->add_option("--seed", d_seed);
    dedup->add_flag("--cosine", d_cosine, "cluster on cosine distance");
    dedup->add_option("--report", d_report, "write cluster summary JSON");

    // curate
    auto* curate = app.add_subcommand("curate", "generate and filter reasoning");
    std::string cu_in, cu_out, cu_provider = "mock", cu_strategy = "D", cu_match = "equality";
    curate->add_option("input", cu_in)->required()->check(CLI::ExistingFile);
    curate->add_option("-o,--out", cu_out);
    curate->add_option("--provider", cu_provider);
    curate->add_option("--strategy", cu_strategy, "A, B, C or D");
    curate->add_option("--match", cu_match, "equality or containment");
    add_provider_flags(curate, pf);

    // emit
    auto* emit = app.add_subcommand("emit", "write SFT JSONL");
    std::string e_in, e_out, e_shape = "messages";
    bool e_cot = true;
    emit->add_option("input", e_in)->required()->check(CLI::ExistingFile);
    emit->add_option("-o,--out", e_out)->required();
    emit->add_option("--with-cot", e_cot, "true or false");
    emit->add_option("--shape", e_shape)->check(CLI::IsMember({"messages", "flat"}));

    // eval
    auto* eval = app.add_subcommand("eval", "score a model on a labelled split");
    std::string ev_in, ev_provider = "mock", ev_report, ev_format = "table", ev_binary, ev_extra,
                       ev_pairs;
    bool ev_cot = false, ev_accuracy = false;
    eval->add_option("input", ev_in)->required()->check(CLI::ExistingFile);
    eval->add_option("--provider", ev_provider);
    eval->add_option("--with-cot", ev_cot, "true or false");
    eval->add_option("--report", ev_report, "write the JSON report");
    eval->add_option("--pairs", ev_pairs, "write per-sample predictions as JSONL");
    eval->add_option("--print", ev_format)->check(CLI::IsMember({"table", "json", "csv"}));
    eval->add_option("--binary", ev_binary, "score as positive-vs-Harmless for this category");
    eval->add_option("--extra-categories", ev_extra, "JSON list of additional categories")
        ->check(CLI::ExistingFile);
    eval->add_flag("--accuracy", ev_accuracy, "add per-category accuracy to the table");
    add_provider_flags(eval, pf);

    // augment
    auto* augment = app.add_subcommand("augment", "one shortcut-driven augmentation round");
    std::string a_train, a_val, a_gen = "mock", a_judge = "mock", a_model, a_strategy = "D",
                                a_out, a_report, a_salt;
    std::size_t a_per = 10;
    bool a_cot = true;
    augment->add_option("--train", a_train)->required()->check(CLI::ExistingFile);
    augment->add_option("--val", a_val)->required()->check(CLI::ExistingFile);
    augment->add_option("--gen-provider", a_gen);
    augment->add_option("--judge-provider", a_judge);
    augment->add_option("--model-provider", a_model, "model evaluated on --val (default: judge)");
    augment->add_option("--strategy", a_strategy);
    augment->add_option("--per-category", a_per);
    augment->add_option("--salt", a_salt, "distinguishes generation requests across rounds");
    augment->add_option("--with-cot", a_cot, "evaluate --val with the reasoning prompt");
    augment->add_option("-o,--out", a_out)->required();
    augment->add_option("--report", a_report);
    add_provider_flags(augment, pf);

    // run
    auto* run = app.add_subcommand("run", "run pipeline stages from --config");
    std::string r_stages = "all";
    run->add_option("--stages", r_stages, "comma-separated stages or 'all'");

    // validate
    auto* validate = app.add_subcommand("validate", "check a config file");
    std::string v_path;
    validate->add_option("path", v_path, "config file (defaults to --config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    log::set_format(g.log == "json" ? log::Format::Json : log::Format::Text);
    log::set_level(g.verbose ? log::Level::Debug : log::Level::Info);

    try {
        std::vector<CategoryInfo> extra;
        if (!ev_extra.empty()) extra = read_extra_categories(ev_extra);
        Taxonomy taxonomy = Taxonomy::extended(extra);
        if (!g.aliases.empty()) taxonomy.merge_aliases(read_json(g.aliases));

        if (*c_stats) {
            auto d = load_dataset(c_in, format_for(c_in, c_fmt), taxonomy);
            std::cout << format_stats(dataset_stats(d), taxonomy);
        } else if (*c_split) {
            auto d = load_dataset(c_in, format_for(c_in, c_fmt), taxonomy);
            auto [train, test] = split_dataset(d, train_per, test_per, split_seed);
            save_dataset(train, train_out);
            save_dataset(test, test_out);
            std::cout << "train " << train.size() << ", test " << test.size() << '\n';
        } else if (*dedup) {
            auto d = load_dataset(d_in, format_for(d_in, d_fmt), taxonomy);
            auto encoder = make_encoder(d_encoder);
            DedupOptions opt;
            opt.per_category_target = d_target;
            opt.seed = d_seed;
            if (d_cosine) opt.kmeans.metric = DistanceMetric::Cosine;
            DedupReport report;
            auto out = dedup_dataset(d, *encoder, opt, &report);
            save_dataset(out, d_out);
            if (!d_report.empty()) {
                json j = json::array();
                for (const auto& a : report.assignments) {
                    j.push_back({{"category", taxonomy.canonical_name(a.category)},
                                 {"samples", a.ids.size()},
                                 {"requested_k", a.requested_k},
                                 {"k", a.k},
                                 {"iterations", a.iterations},
                                 {"converged", a.converged}});
                }
                write_file_atomic(d_report, j.dump(2) + "\n");
            }
            std::cout << d.size() << " -> " << out.size() << " samples\n";
        } else if (*curate) {
            auto strategy = strategy_from_string(cu_strategy);
            auto d = load_dataset(cu_in, DatasetFormat::Jsonl, taxonomy);
            Session s(g, pf, taxonomy);
            if (g.dry_run) {
                print_prompts(d.samples(), first_pass_prompts(d.samples(), s.templates()));
                return kExitOk;
            }
            if (cu_out.empty()) throw ConfigFailure("curate: --out is required");
            CurationOptions opt;
            opt.match = match_rule_from_string(cu_match);
            auto curated = generate_cot(d.samples(), s.gateway(), s.provider(cu_provider), strategy,
                                        s.templates(), opt);
            save_curated(curated, cu_out, taxonomy);
            std::cout << to_json(curated.ledger).dump() << '\n';
            if (curated.ledger.total > 0 && curated.provider_failures == curated.ledger.total) {
                log::error("every provider call failed");
                return kExitProvider;
            }
        } else if (*emit) {
            auto curated = load_curated(e_in, taxonomy);
            PromptTemplates templates(taxonomy);
            if (auto cfg = config_from(g); cfg && cfg->templates) templates.load_overrides(*cfg->templates);
            auto r = emit_sft(curated, e_cot, shape_from_string(e_shape), e_out, templates);
            auto check = roundtrip_check(e_out, taxonomy);
            std::cout << r.records << " records, " << r.bytes << " bytes, round-trip "
                      << (check.ok ? "ok" : "FAILED at line " + std::to_string(check.bad_line))
                      << '\n';
            if (!check.ok) return kExitStage;
        } else if (*eval) {
            auto d = load_dataset(ev_in, format_for(ev_in, "auto"), taxonomy);
            Session s(g, pf, taxonomy);
            const auto kind = ev_cot ? PromptKind::ClassificationWithCot : PromptKind::Classification;
            if (g.dry_run) {
                print_prompts(d.samples(), render_all(d, s.templates(), kind));
                return kExitOk;
            }
            auto result = run_model_eval(d, s.gateway(), s.provider(ev_provider), ev_cot, s.templates());
            if (!result.pairs.empty() && result.provider_failures == result.pairs.size()) {
                log::error("every provider call failed");
                return kExitProvider;
            }
            if (!ev_pairs.empty()) {
                std::string body;
                for (const auto& p : result.pairs) {
                    body += json{{"sample_id", p.sample_id},
                                 {"gold", taxonomy.join_canonical(p.gold)},
                                 {"predicted", taxonomy.join_canonical(p.predicted)},
                                 {"filtered", p.filtered}}
                                .dump() +
                            "\n";
                }
                write_file_atomic(ev_pairs, body);
            }
            json out;
            if (!ev_binary.empty()) {
                auto c = taxonomy.from_canonical(ev_binary);
                if (!c) c = taxonomy.from_alias(ev_binary);
                if (!c) throw ConfigFailure("unknown category '" + ev_binary + "'");
                out = to_json(score_binary_ood(result.pairs, *c), taxonomy);
                std::cout << out.dump(2) << '\n';
            } else {
                auto report = score_multicategory(result.pairs, taxonomy.all(), taxonomy,
                                                  fs::path(ev_in).stem().string());
                out = to_json(report);
                if (ev_format == "json") std::cout << out.dump(2) << '\n';
                else if (ev_format == "csv") std::cout << format_report_csv(report);
                else std::cout << format_report_table(report, ev_accuracy);
            }
            if (result.filtered + result.parse_failures + result.provider_failures > 0) {
                log::info(std::to_string(result.filtered) + " filtered, " +
                          std::to_string(result.parse_failures) + " unparseable, " +
                          std::to_string(result.provider_failures) + " provider failures");
            }
            if (!ev_report.empty()) write_file_atomic(ev_report, out.dump(2) + "\n");
        } else if (*augment) {
            auto train = load_dataset(a_train, DatasetFormat::Jsonl, taxonomy);
            auto val = load_dataset(a_val, DatasetFormat::Jsonl, taxonomy);
            auto strategy = strategy_from_string(a_strategy);
            Session s(g, pf, taxonomy);
            if (g.dry_run) {
                const auto kind = a_cot ? PromptKind::ClassificationWithCot : PromptKind::Classification;
                print_prompts(val.samples(), render_all(val, s.templates(), kind));
                return kExitOk;
            }
            AugmentProviders providers{s.provider(a_model.empty() ? a_judge : a_model),
                                       s.provider(a_judge), s.provider(a_gen)};
            AugmentOptions opt;
            opt.per_category = a_per;
            opt.with_cot = a_cot;
            opt.salt = a_salt;
            auto result = augment_round(train, val, s.gateway(), providers, strategy, s.templates(), opt);
            save_dataset(result.dataset, a_out);
            if (!a_report.empty()) {
                write_file_atomic(a_report, to_json(result, taxonomy).dump(2) + "\n");
            }
            std::cout << result.failures.size() << " failures, " << result.added
                      << " samples added, " << result.dataset.size() << " total\n";
        } else if (*run) {
            auto cfg = config_from(g);
            if (!cfg) throw ConfigFailure("run: --config is required");
            std::set<Stage> stages;
            try {
                stages = parse_stages(r_stages);
            } catch (const Error& e) {
                throw ConfigFailure(e.what());
            }
            RunOptions opt;
            opt.dry_run = g.dry_run;
            if (!g.cache_dir.empty()) opt.cache_dir = fs::path(g.cache_dir);
            auto manifest = run_pipeline(*cfg, stages, opt);
            std::cout << manifest.dump(2) << '\n';
        } else if (*validate) {
            const std::string path = v_path.empty() ? g.config : v_path;
            if (path.empty()) throw ConfigFailure("validate: no config given");
            std::vector<std::string> problems;
            try {
                problems = validate_config(path);
            } catch (const Error& e) {
                throw ConfigFailure(e.what());
            }
            for (const auto& p : problems) std::cout << p << '\n';
            if (!problems.empty()) return kExitConfig;
            std::cout << path << ": ok\n";
        }
    } catch (const ConfigFailure& e) {
        log::error(e.what());
        return kExitConfig;
    } catch (const Error& e) {
        log::error(e.what());
        if (e.code() == ErrorCode::ConfigError) return kExitConfig;
        if (is_provider_failure(e.code())) return kExitProvider;
        return kExitStage;
    } catch (const std::exception& e) {
        log::error(e.what());
        return kExitStage;
    }
    return kExitOk;
}
