#include "modforge/pipeline.hpp"

#include <unistd.h>

#include <algorithm>
#include <sstream>

#include <toml.hpp>

#include "modforge/augment.hpp"
#include "modforge/dedup.hpp"
#include "modforge/error.hpp"
#include "modforge/evaluation.hpp"
#include "modforge/io.hpp"
#include "modforge/log.hpp"

namespace modforge {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ------------------------------------------------------------- documents

namespace {

json toml_to_json(const toml::node& node) {
    if (auto t = node.as_table()) {
        json j = json::object();
        for (const auto& [k, v] : *t) j[std::string(k.str())] = toml_to_json(v);
        return j;
    }
    if (auto a = node.as_array()) {
        json j = json::array();
        for (const auto& v : *a) j.push_back(toml_to_json(v));
        return j;
    }
    if (auto v = node.as_string()) return v->get();
    if (auto v = node.as_integer()) return v->get();
    if (auto v = node.as_floating_point()) return v->get();
    if (auto v = node.as_boolean()) return v->get();
    // dates and times stay textual
    return node.visit([](const auto& v) {
        std::ostringstream out;
        out << v;
        return out.str();
    });
}

}  // namespace

json read_config_document(const fs::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, e.what());
    }
    if (path.extension() == ".json") {
        try {
            return json::parse(text);
        } catch (const json::parse_error& e) {
            // nlohmann reports a byte offset; turn it into a line number
            const auto upto = std::min<std::size_t>(e.byte, text.size());
            const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
            throw ParseError(static_cast<std::size_t>(line), e.what());
        }
    }
    try {
        return toml_to_json(toml::parse(text, path.string()));
    } catch (const toml::parse_error& e) {
        throw ParseError(e.source().begin.line, std::string(e.description()));
    }
}

// ------------------------------------------------------------ validation

namespace {

class Checker {
public:
    Checker(const json& doc, fs::path base) : doc_(doc), base_(std::move(base)) {}

    std::vector<std::string> problems;

    void problem(const std::string& field, const std::string& message) {
        problems.push_back(field + ": " + message);
    }

    const json* section(const std::string& name, bool required) {
        if (!doc_.contains(name)) {
            if (required) problem(name, "missing section");
            return nullptr;
        }
        if (!doc_.at(name).is_object()) {
            problem(name, "must be a table");
            return nullptr;
        }
        return &doc_.at(name);
    }

    std::optional<std::string> str(const json* sec, const std::string& sname, const std::string& key,
                                   bool required) {
        if (!sec || !sec->contains(key)) {
            if (required && sec) problem(sname + "." + key, "missing");
            return std::nullopt;
        }
        const auto& v = sec->at(key);
        if (!v.is_string()) {
            problem(sname + "." + key, "must be a string");
            return std::nullopt;
        }
        return v.get<std::string>();
    }

    template <typename T>
    std::optional<T> num(const json* sec, const std::string& sname, const std::string& key) {
        if (!sec || !sec->contains(key)) return std::nullopt;
        const auto& v = sec->at(key);
        if (!v.is_number()) {
            problem(sname + "." + key, "must be a number");
            return std::nullopt;
        }
        if constexpr (std::is_unsigned_v<T>) {
            if (v.is_number_float() || v.get<long long>() < 0) {
                problem(sname + "." + key, "must be a non-negative integer");
                return std::nullopt;
            }
        }
        return v.get<T>();
    }

    std::optional<bool> boolean(const json* sec, const std::string& sname, const std::string& key) {
        if (!sec || !sec->contains(key)) return std::nullopt;
        const auto& v = sec->at(key);
        if (!v.is_boolean()) {
            problem(sname + "." + key, "must be true or false");
            return std::nullopt;
        }
        return v.get<bool>();
    }

    fs::path resolve(const std::string& p) const {
        fs::path path(p);
        return path.is_absolute() ? path : (base_ / path).lexically_normal();
    }

    void require_file(const std::string& field, const fs::path& path) {
        std::error_code ec;
        if (!fs::is_regular_file(path, ec)) problem(field, "file not found: " + path.string());
    }

    void require_writable_dir(const std::string& field, const fs::path& path) {
        std::error_code ec;
        if (fs::exists(path, ec)) {
            if (!fs::is_directory(path, ec)) problem(field, "not a directory: " + path.string());
            else if (::access(path.c_str(), W_OK) != 0) problem(field, "not writable: " + path.string());
            return;
        }
        auto parent = path.parent_path();
        while (!parent.empty() && !fs::exists(parent, ec)) parent = parent.parent_path();
        if (parent.empty()) parent = ".";
        if (!fs::is_directory(parent, ec) || ::access(parent.c_str(), W_OK) != 0) {
            problem(field, "cannot be created under " + parent.string());
        }
    }

private:
    const json& doc_;
    fs::path base_;
};

template <typename F>
auto attempt(Checker& c, const std::string& field, F&& f) -> std::optional<decltype(f())> {
    try {
        return f();
    } catch (const Error& e) {
        c.problem(field, e.what());
        return std::nullopt;
    }
}

}  // namespace

std::vector<std::string> validate_config_document(const json& doc, const fs::path& base_dir,
                                                  PipelineConfig* out) {
    PipelineConfig cfg;
    Checker c(doc, base_dir);
    if (!doc.is_object()) {
        c.problem("config", "top level must be a table");
        return c.problems;
    }

    // paths
    const auto* paths = c.section("paths", true);
    if (auto raw = c.str(paths, "paths", "raw", true)) {
        cfg.raw = c.resolve(*raw);
        c.require_file("paths.raw", cfg.raw);
    }
    if (auto fmt = c.str(paths, "paths", "raw_format", false)) {
        if (*fmt == "jsonl") cfg.raw_format = DatasetFormat::Jsonl;
        else if (*fmt == "csv") cfg.raw_format = DatasetFormat::Csv;
        else c.problem("paths.raw_format", "expected jsonl or csv, got '" + *fmt + "'");
    } else if (cfg.raw.extension() == ".csv") {
        cfg.raw_format = DatasetFormat::Csv;
    }
    if (auto wd = c.str(paths, "paths", "workdir", true)) {
        cfg.workdir = c.resolve(*wd);
        c.require_writable_dir("paths.workdir", cfg.workdir);
    }
    if (auto cache = c.str(paths, "paths", "cache", false)) cfg.cache = c.resolve(*cache);
    if (auto t = c.str(paths, "paths", "templates", false)) {
        cfg.templates = c.resolve(*t);
        std::error_code ec;
        if (!fs::is_directory(*cfg.templates, ec)) {
            c.problem("paths.templates", "directory not found: " + cfg.templates->string());
        }
    }

    // gateway
    const auto* gw = c.section("gateway", false);
    if (auto v = c.num<std::size_t>(gw, "gateway", "workers")) {
        if (*v == 0) c.problem("gateway.workers", "must be >= 1");
        else cfg.gateway.workers = *v;
    }
    if (auto v = c.num<double>(gw, "gateway", "backoff_base_s")) cfg.gateway.backoff_base_s = *v;
    if (auto v = c.num<double>(gw, "gateway", "backoff_max_s")) cfg.gateway.backoff_max_s = *v;
    if (auto v = c.boolean(gw, "gateway", "cache")) cfg.gateway.cache_enabled = *v;
    if (cfg.gateway.backoff_base_s < 0 || cfg.gateway.backoff_max_s < cfg.gateway.backoff_base_s) {
        c.problem("gateway", "need 0 <= backoff_base_s <= backoff_max_s");
    }

    // providers
    const auto* providers = c.section("providers", true);
    if (providers) {
        for (const auto& [id, pj] : providers->items()) {
            const std::string field = "providers." + id;
            if (!pj.is_object()) {
                c.problem(field, "must be a table");
                continue;
            }
            ProviderHandle h;
            h.id = id;
            if (auto ep = c.str(&pj, field, "endpoint", true)) {
                h.endpoint = *ep;
                if (!h.is_mock() && !h.endpoint.starts_with("http://") &&
                    !h.endpoint.starts_with("https://")) {
                    c.problem(field + ".endpoint", "expected \"mock\" or an http(s) URL");
                }
            }
            if (h.is_mock()) h.rpm = 1'000'000;
            if (auto v = c.str(&pj, field, "model", false)) h.model = *v;
            if (auto v = c.str(&pj, field, "auth_env", false)) h.auth_env = *v;
            if (auto v = c.num<double>(&pj, field, "timeout_s")) h.timeout_s = *v;
            if (auto v = c.num<int>(&pj, field, "retries")) h.max_retries = *v;
            if (auto v = c.num<int>(&pj, field, "max_retries")) h.max_retries = *v;
            if (auto v = c.num<int>(&pj, field, "rpm")) h.rpm = *v;
            if (pj.contains("refusal_phrases")) {
                const auto& rp = pj.at("refusal_phrases");
                if (!rp.is_array() ||
                    !std::all_of(rp.begin(), rp.end(), [](const json& x) { return x.is_string(); })) {
                    c.problem(field + ".refusal_phrases", "must be a list of strings");
                } else {
                    h.refusal_phrases = rp.get<std::vector<std::string>>();
                }
            }
            if (auto script = c.str(&pj, field, "script", false)) {
                if (!h.is_mock()) {
                    c.problem(field + ".script", "only mock providers take a script");
                } else {
                    cfg.mock_scripts[id] = c.resolve(*script);
                    c.require_file(field + ".script", cfg.mock_scripts[id]);
                }
            }
            attempt(c, field, [&] {
                h.validate();
                return true;
            });
            cfg.providers[id] = std::move(h);
        }
        if (providers->empty()) c.problem("providers", "no providers defined");
    }
    auto provider_ref = [&](const std::string& field, const std::optional<std::string>& id) {
        if (id && providers && !cfg.providers.count(*id)) {
            c.problem(field, "references undefined provider '" + *id + "'");
        }
        return id.value_or("");
    };

    // dedup
    const auto* dd = c.section("dedup", false);
    if (auto v = c.num<std::size_t>(dd, "dedup", "target")) {
        if (*v == 0) c.problem("dedup.target", "must be >= 1");
        else cfg.dedup.target = *v;
    }
    if (auto v = c.str(dd, "dedup", "encoder", false)) {
        cfg.dedup.encoder = *v;
        if (!v->starts_with("remote:")) attempt(c, "dedup.encoder", [&] { return make_encoder(*v) != nullptr; });
        else if (v->size() <= 7) c.problem("dedup.encoder", "remote encoder needs a URL");
    }
    if (auto v = c.num<std::uint64_t>(dd, "dedup", "seed")) cfg.dedup.seed = *v;

    // curation
    const auto* cu = c.section("curation", true);
    cfg.curation.provider = provider_ref("curation.provider", c.str(cu, "curation", "provider", true));
    if (auto v = c.str(cu, "curation", "strategy", false)) {
        if (auto s = attempt(c, "curation.strategy", [&] { return strategy_from_string(*v); })) {
            cfg.curation.strategy = *s;
        }
    }
    if (auto v = c.str(cu, "curation", "match", false)) {
        if (auto m = attempt(c, "curation.match", [&] { return match_rule_from_string(*v); })) {
            cfg.curation.match = *m;
        }
    }

    // emission
    const auto* em = c.section("emission", false);
    if (auto v = c.boolean(em, "emission", "with_cot")) cfg.emission.with_cot = *v;
    if (auto v = c.str(em, "emission", "shape", false)) {
        if (auto s = attempt(c, "emission.shape", [&] { return shape_from_string(*v); })) {
            cfg.emission.shape = *s;
        }
    }

    // eval
    const auto* ev = c.section("eval", false);
    cfg.eval.provider = provider_ref("eval.provider", c.str(ev, "eval", "provider", false));
    if (auto v = c.boolean(ev, "eval", "with_cot")) cfg.eval.with_cot = *v;
    if (ev && ev->contains("splits")) {
        const auto& splits = ev->at("splits");
        if (!splits.is_object()) {
            c.problem("eval.splits", "must be a table of name = path");
        } else {
            for (const auto& [name, p] : splits.items()) {
                if (!p.is_string()) {
                    c.problem("eval.splits." + name, "must be a path string");
                    continue;
                }
                EvalSplitConfig s{name, c.resolve(p.get<std::string>())};
                c.require_file("eval.splits." + name, s.path);
                cfg.eval.splits.push_back(std::move(s));
            }
        }
        if (!cfg.eval.splits.empty() && cfg.eval.provider.empty()) {
            c.problem("eval.provider", "missing (required when splits are configured)");
        }
    }

    // augment
    if (const auto* au = c.section("augment", false)) {
        cfg.augment.enabled = true;
        cfg.augment.model_provider =
            provider_ref("augment.model_provider", c.str(au, "augment", "model_provider", true));
        cfg.augment.judge_provider =
            provider_ref("augment.judge_provider", c.str(au, "augment", "judge_provider", true));
        cfg.augment.gen_provider =
            provider_ref("augment.gen_provider", c.str(au, "augment", "gen_provider", true));
        if (auto v = c.str(au, "augment", "val", true)) {
            cfg.augment.val = c.resolve(*v);
            c.require_file("augment.val", cfg.augment.val);
        }
        if (auto v = c.num<std::size_t>(au, "augment", "per_category")) {
            if (*v == 0) c.problem("augment.per_category", "must be >= 1");
            else cfg.augment.per_category = *v;
        }
        if (auto v = c.str(au, "augment", "strategy", false)) {
            cfg.augment.strategy = attempt(c, "augment.strategy", [&] { return strategy_from_string(*v); });
        }
        if (auto v = c.str(au, "augment", "salt", false)) cfg.augment.salt = *v;
    }

    static const std::set<std::string> kSections{"paths", "gateway", "providers", "dedup",
                                                 "curation", "emission", "eval", "augment"};
    for (const auto& [k, v] : doc.items()) {
        if (!kSections.count(k)) c.problem(k, "unknown section");
    }

    if (out) *out = std::move(cfg);
    return c.problems;
}

std::vector<std::string> validate_config(const fs::path& path) {
    auto doc = read_config_document(path);
    return validate_config_document(doc, fs::absolute(path).parent_path());
}

PipelineConfig load_config(const fs::path& path) {
    auto doc = read_config_document(path);
    PipelineConfig cfg;
    auto problems = validate_config_document(doc, fs::absolute(path).parent_path(), &cfg);
    if (!problems.empty()) {
        std::string msg = path.string() + " has " + std::to_string(problems.size()) + " problem(s)";
        for (const auto& p : problems) msg += "\n  " + p;
        throw Error(ErrorCode::ConfigError, msg);
    }
    cfg.source = path;
    return cfg;
}

std::unique_ptr<Gateway> make_gateway(const PipelineConfig& config) {
    auto options = config.gateway;
    if (config.cache) options.cache_dir = config.cache;
    auto gw = std::make_unique<Gateway>(options);
    for (const auto& [id, handle] : config.providers) {
        if (!handle.is_mock()) {
            gw->add_provider(handle);
            continue;
        }
        MockScript script;
        if (auto it = config.mock_scripts.find(id); it != config.mock_scripts.end()) {
            try {
                script = MockScript::from_json(json::parse(read_file(it->second)));
            } catch (const json::exception& e) {
                throw Error(ErrorCode::ConfigError, it->second.string() + ": " + e.what());
            }
        }
        gw->add_provider(handle, std::make_shared<MockTransport>(std::move(script)));
    }
    return gw;
}

// ---------------------------------------------------------------- stages

const char* to_string(Stage stage) {
    switch (stage) {
        case Stage::Dedup: return "dedup";
        case Stage::Curate: return "curate";
        case Stage::Emit: return "emit";
        case Stage::Eval: return "eval";
        case Stage::Augment: return "augment";
    }
    return "?";
}

std::set<Stage> parse_stages(std::string_view list) {
    static const std::map<std::string, Stage, std::less<>> kNames{
        {"dedup", Stage::Dedup}, {"curate", Stage::Curate}, {"emit", Stage::Emit},
        {"eval", Stage::Eval},   {"augment", Stage::Augment}};
    std::set<Stage> out;
    std::string item;
    std::istringstream in{std::string(list)};
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        if (item == "all") {
            for (const auto& [_, s] : kNames) out.insert(s);
            continue;
        }
        auto it = kNames.find(item);
        if (it == kNames.end()) throw Error(ErrorCode::ConfigError, "unknown stage '" + item + "'");
        out.insert(it->second);
    }
    if (out.empty()) throw Error(ErrorCode::ConfigError, "no stages selected");
    return out;
}

std::string file_digest(const fs::path& path) { return "sha256:" + sha256_hex(read_file(path)); }

namespace {

class StageRun {
public:
    StageRun(Stage stage, const fs::path& workdir)
        : stage_(stage), workdir_(workdir), start_(std::chrono::steady_clock::now()) {
        entry_["stage"] = to_string(stage);
    }

    void input(const std::string& name, const fs::path& path) {
        std::error_code ec;
        if (!fs::is_regular_file(path, ec)) {
            throw Error(ErrorCode::StageInputMissing,
                        std::string(to_string(stage_)) + ": missing input " + path.string());
        }
        entry_["inputs"][name] = ordered_json{{"path", display(path)}, {"sha256", file_digest(path)}};
    }

    void output(const std::string& name, const fs::path& path) {
        entry_["outputs"][name] = ordered_json{{"path", display(path)}, {"sha256", file_digest(path)}};
    }

    ordered_json& counts() { return entry_["counts"]; }

    ordered_json finish() {
        const auto elapsed = std::chrono::steady_clock::now() - start_;
        entry_["seconds"] = std::chrono::duration<double>(elapsed).count();
        return std::move(entry_);
    }

private:
    std::string display(const fs::path& p) const {
        auto rel = p.lexically_relative(workdir_);
        return !rel.empty() && !rel.string().starts_with("..") ? rel.string() : p.string();
    }

    Stage stage_;
    fs::path workdir_;
    std::chrono::steady_clock::time_point start_;
    ordered_json entry_ = ordered_json::object();
};

void write_prompts(const fs::path& path, const std::vector<std::string>& ids,
                   const std::vector<ChatExchange>& prompts) {
    std::string body;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        ordered_json j{{"sample_id", ids[i]}, {"messages", prompts[i].to_messages()}};
        body += j.dump() + "\n";
    }
    write_file_atomic(path, body);
}

[[noreturn]] void exhausted(Stage stage, std::size_t n) {
    throw Error(ErrorCode::RateLimitedExhausted,
                std::string(to_string(stage)) + ": all " + std::to_string(n) +
                    " provider calls failed");
}

}  // namespace

ordered_json run_pipeline(const PipelineConfig& config, const std::set<Stage>& stages,
                  const RunOptions& options) {
    const auto& wd = config.workdir;
    fs::create_directories(wd);
    const auto& taxonomy = Taxonomy::standard();
    PromptTemplates templates(taxonomy);
    if (config.templates) templates.load_overrides(*config.templates);

    PipelineConfig effective = config;
    if (options.cache_dir) effective.cache = options.cache_dir;
    std::unique_ptr<Gateway> gateway;
    if (!options.dry_run) gateway = make_gateway(effective);

    ordered_json manifest;
    manifest["dry_run"] = options.dry_run;
    manifest["template_version"] = templates.version();
    if (!config.source.empty()) manifest["config"] = {{"sha256", file_digest(config.source)}};
    manifest["stages"] = ordered_json::array();

    const fs::path dedup_path = wd / artifacts::kDedup;
    const fs::path curated_path = wd / artifacts::kCurated;
    const fs::path sft_path = wd / artifacts::kSft;
    const fs::path dry_dir = wd / artifacts::kDryRunDir;
    if (options.dry_run) fs::create_directories(dry_dir);

    // dataset handed from dedup to later stages during a dry run
    std::optional<Dataset> dry_dedup;

    if (stages.count(Stage::Dedup)) {
        StageRun run(Stage::Dedup, wd);
        run.input("raw", config.raw);
        auto raw = load_dataset(config.raw, config.raw_format, taxonomy);
        if (options.dry_run && config.dedup.encoder.starts_with("remote:")) {
            run.counts()["skipped"] = "remote encoder in dry run";
            dry_dedup = raw;
        } else {
            auto encoder = make_encoder(config.dedup.encoder);
            DedupOptions dopt;
            dopt.per_category_target = config.dedup.target;
            dopt.seed = config.dedup.seed;
            auto out = dedup_dataset(raw, *encoder, dopt);
            run.counts()["input"] = raw.size();
            run.counts()["kept"] = out.size();
            if (options.dry_run) {
                dry_dedup = out;
            } else {
                save_dataset(out, dedup_path);
                run.output("dataset", dedup_path);
            }
        }
        log::info("dedup: " + std::to_string(raw.size()) + " samples in");
        manifest["stages"].push_back(run.finish());
    }

    auto curation_input = [&](StageRun& run) -> Dataset {
        if (dry_dedup) return *dry_dedup;
        run.input("dataset", dedup_path);
        return load_dataset(dedup_path, DatasetFormat::Jsonl, taxonomy);
    };

    if (stages.count(Stage::Curate)) {
        StageRun run(Stage::Curate, wd);
        auto input = curation_input(run);
        if (options.dry_run) {
            std::vector<std::string> ids;
            for (const auto& s : input.samples()) ids.push_back(s.id);
            const auto path = dry_dir / "curate.prompts.jsonl";
            write_prompts(path, ids, first_pass_prompts(input.samples(), templates));
            run.counts()["prompts"] = ids.size();
            run.output("prompts", path);
        } else {
            const auto& provider = gateway->provider(config.curation.provider);
            CurationOptions copt;
            copt.match = config.curation.match;
            auto curated = generate_cot(input.samples(), *gateway, provider,
                                        config.curation.strategy, templates, copt);
            if (curated.ledger.total > 0 && curated.provider_failures == curated.ledger.total) {
                exhausted(Stage::Curate, curated.ledger.total);
            }
            save_curated(curated, curated_path, taxonomy);
            run.output("curated", curated_path);
            run.output("ledger", fs::path(curated_path.string() + ".ledger.json"));
            run.counts()["strategy"] = to_string(curated.strategy);
            run.counts()["ledger"] = to_json(curated.ledger);
            run.counts()["emitted"] = curated.records.size();
            run.counts()["provider_failures"] = curated.provider_failures;
            log::info("curate: " + std::to_string(curated.records.size()) + " of " +
                      std::to_string(curated.ledger.total) + " records kept");
        }
        manifest["stages"].push_back(run.finish());
    }

    if (stages.count(Stage::Emit)) {
        StageRun run(Stage::Emit, wd);
        if (options.dry_run) {
            run.counts()["skipped"] = "needs curated records";
        } else {
            run.input("curated", curated_path);
            auto curated = load_curated(curated_path, taxonomy);
            auto report = emit_sft(curated, config.emission.with_cot, config.emission.shape,
                                   sft_path, templates);
            auto check = roundtrip_check(sft_path, taxonomy);
            if (!check.ok) {
                throw Error(ErrorCode::ParseError, "emit round-trip failed at line " +
                                                       std::to_string(check.bad_line) + ": " +
                                                       check.message);
            }
            run.output("sft", sft_path);
            run.counts()["records"] = report.records;
            run.counts()["bytes"] = report.bytes;
            run.counts()["roundtrip_ok"] = check.ok;
        }
        manifest["stages"].push_back(run.finish());
    }

    if (stages.count(Stage::Eval)) {
        StageRun run(Stage::Eval, wd);
        if (config.eval.splits.empty()) {
            throw Error(ErrorCode::StageInputMissing, "eval: no splits configured");
        }
        const auto kind =
            config.eval.with_cot ? PromptKind::ClassificationWithCot : PromptKind::Classification;
        const fs::path eval_dir = wd / artifacts::kEvalDir;
        fs::create_directories(options.dry_run ? dry_dir : eval_dir);
        for (const auto& split : config.eval.splits) {
            run.input(split.name, split.path);
            auto data = load_dataset(split.path, split.path.extension() == ".csv"
                                                     ? DatasetFormat::Csv
                                                     : DatasetFormat::Jsonl,
                                     taxonomy);
            if (options.dry_run) {
                std::vector<std::string> ids;
                std::vector<ChatExchange> prompts;
                for (const auto& s : data.samples()) {
                    ids.push_back(s.id);
                    prompts.push_back(templates.render(kind, s.text));
                }
                const auto path = dry_dir / ("eval." + split.name + ".prompts.jsonl");
                write_prompts(path, ids, prompts);
                run.output(split.name + ".prompts", path);
                continue;
            }
            auto result = run_model_eval(data, *gateway, gateway->provider(config.eval.provider),
                                         config.eval.with_cot, templates);
            if (!result.pairs.empty() && result.provider_failures == result.pairs.size()) {
                exhausted(Stage::Eval, result.pairs.size());
            }
            auto report = score_multicategory(result.pairs, taxonomy.all(), taxonomy,
                                              split.name);
            auto rj = to_json(report);
            rj["filtered"] = result.filtered;
            rj["parse_failures"] = result.parse_failures;
            rj["provider_failures"] = result.provider_failures;
            const auto json_path = eval_dir / (split.name + ".json");
            const auto txt_path = eval_dir / (split.name + ".txt");
            const auto csv_path = eval_dir / (split.name + ".csv");
            write_file_atomic(json_path, rj.dump(2) + "\n");
            write_file_atomic(txt_path, format_report_table(report));
            write_file_atomic(csv_path, format_report_csv(report));
            run.output(split.name + ".json", json_path);
            run.output(split.name + ".txt", txt_path);
            run.output(split.name + ".csv", csv_path);
            run.counts()[split.name] = ordered_json{{"samples", report.samples},
                                                    {"recall", report.average.recall},
                                                    {"precision", report.average.precision},
                                                    {"f1", report.average.f1}};
        }
        manifest["stages"].push_back(run.finish());
    }

    if (stages.count(Stage::Augment)) {
        StageRun run(Stage::Augment, wd);
        if (!config.augment.enabled) {
            throw Error(ErrorCode::StageInputMissing, "augment: no [augment] section configured");
        }
        run.input("val", config.augment.val);
        auto train = curation_input(run);
        auto val = load_dataset(config.augment.val, DatasetFormat::Jsonl, taxonomy);
        if (options.dry_run) {
            std::vector<std::string> ids;
            std::vector<ChatExchange> prompts;
            for (const auto& s : val.samples()) {
                ids.push_back(s.id);
                prompts.push_back(templates.render(PromptKind::ClassificationWithCot, s.text));
            }
            const auto path = dry_dir / "augment.prompts.jsonl";
            write_prompts(path, ids, prompts);
            run.output("prompts", path);
            run.counts()["note"] = "later augment prompts depend on model replies";
        } else {
            AugmentProviders providers{gateway->provider(config.augment.model_provider),
                                       gateway->provider(config.augment.judge_provider),
                                       gateway->provider(config.augment.gen_provider)};
            AugmentOptions aopt;
            aopt.per_category = config.augment.per_category;
            aopt.match = config.curation.match;
            aopt.seed = config.dedup.seed;
            aopt.encoder = config.dedup.encoder;
            aopt.salt = config.augment.salt;
            auto result = augment_round(train, val, *gateway, providers,
                                        config.augment.strategy.value_or(config.curation.strategy),
                                        templates, aopt);
            const auto out_path = wd / artifacts::kAugmented;
            const auto report_path = wd / artifacts::kShortcuts;
            save_dataset(result.dataset, out_path);
            write_file_atomic(report_path, to_json(result, taxonomy).dump(2) + "\n");
            run.output("dataset", out_path);
            run.output("report", report_path);
            run.counts()["failures"] = result.failures.size();
            run.counts()["added"] = result.added;
            run.counts()["total"] = result.dataset.size();
        }
        manifest["stages"].push_back(run.finish());
    }

    const auto manifest_path = (options.dry_run ? dry_dir : wd) / artifacts::kManifest;
    write_file_atomic(manifest_path, manifest.dump(2) + "\n");
    return manifest;
}

}  // namespace modforge
