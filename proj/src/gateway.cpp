#include "modforge/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <nlohmann/json.hpp>

#include "modforge/error.hpp"
#include "modforge/http.hpp"
#include "modforge/io.hpp"

namespace modforge {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
}

}  // namespace

// ------------------------------------------------------------ provider

std::vector<std::string> ProviderHandle::default_refusal_phrases() {
    return {"I'm sorry, but I can't", "I'm sorry, but I cannot", "I am sorry, but I cannot",
            "I cannot assist", "I can't assist", "I can't help with", "I cannot help with",
            "Sorry, I can't", "抱歉，我无法", "很抱歉"};
}

void ProviderHandle::validate() const {
    if (id.empty()) throw Error(ErrorCode::ConfigError, "provider id is empty");
    if (!(timeout_s > 0.0)) throw Error(ErrorCode::ConfigError, id + ": timeout must be > 0");
    if (max_retries < 0) throw Error(ErrorCode::ConfigError, id + ": retries must be >= 0");
    if (rpm < 1) throw Error(ErrorCode::ConfigError, id + ": rpm must be >= 1");
    if (!is_mock()) parse_url(endpoint);
}

// ------------------------------------------------------------ clocks

Clock::Duration SystemClock::now() const {
    return std::chrono::duration_cast<Duration>(
        std::chrono::steady_clock::now().time_since_epoch());
}

void SystemClock::sleep_for(Duration d) {
    if (d > Duration::zero()) std::this_thread::sleep_for(d);
}

Clock::Duration ManualClock::now() const {
    std::lock_guard lock(mu_);
    return now_;
}

void ManualClock::sleep_for(Duration d) {
    std::lock_guard lock(mu_);
    if (d > Duration::zero()) now_ += d;
}

// ------------------------------------------------------------ rate limiter

RateLimiter::RateLimiter(int rpm, std::shared_ptr<Clock> clock)
    : rpm_(rpm), clock_(std::move(clock)) {
    if (rpm_ < 1) throw Error(ErrorCode::InvalidArgument, "rpm must be >= 1");
}

void RateLimiter::acquire() {
    constexpr Clock::Duration kWindow = std::chrono::seconds(60);
    std::lock_guard lock(mu_);
    for (;;) {
        const auto now = clock_->now();
        while (!window_.empty() && now - window_.front() >= kWindow) window_.pop_front();
        if (static_cast<int>(window_.size()) < rpm_) {
            window_.push_back(now);
            all_.push_back(now);
            return;
        }
        clock_->sleep_for(window_.front() + kWindow - now);
    }
}

std::vector<Clock::Duration> RateLimiter::history() const {
    std::lock_guard lock(mu_);
    return all_;
}

// ------------------------------------------------------------ cache

ResponseCache::ResponseCache(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {}

std::string ResponseCache::key_for(const ProviderHandle& provider, const ChatExchange& exchange) {
    json j;
    j["provider"] = provider.id;
    j["model"] = provider.model;
    j["messages"] = exchange.to_messages();
    return sha256_hex(j.dump());
}

std::filesystem::path ResponseCache::file_for(const std::string& key) const {
    return *dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<CachedReply> ResponseCache::get(const std::string& key) {
    std::lock_guard lock(mu_);
    if (auto it = memory_.find(key); it != memory_.end()) return it->second;
    if (!dir_) return std::nullopt;
    auto path = file_for(key);
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
        auto j = json::parse(read_file(path));
        CachedReply reply{j.at("raw").get<std::string>(), j.at("filtered").get<bool>()};
        memory_.emplace(key, reply);
        return reply;
    } catch (const std::exception&) {
        // Corrupt entry: treat as a miss, it will be overwritten.
        return std::nullopt;
    }
}

void ResponseCache::put(const std::string& key, const CachedReply& reply) {
    std::lock_guard lock(mu_);
    memory_[key] = reply;
    if (dir_) {
        json j;
        j["raw"] = reply.raw;
        j["filtered"] = reply.filtered;
        write_file_atomic(file_for(key), j.dump());
    }
}

// ------------------------------------------------------------ transports

std::string wire_body(const std::string& content, bool refused) {
    json choice;
    choice["index"] = 0;
    choice["message"] = {{"role", "assistant"}, {"content", refused ? "" : content}};
    choice["finish_reason"] = refused ? "content_filter" : "stop";
    json body;
    body["object"] = "chat.completion";
    body["choices"] = json::array({choice});
    return body.dump();
}

CachedReply decode_wire_reply(const std::string& body, const ProviderHandle& provider) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedProviderReply, e.what());
    }
    if (j.is_object() && j.value("filtered", false)) return {"", true};
    if (j.contains("error") && j["error"].is_object()) {
        const auto& err = j["error"];
        if (err.value("code", json()).is_string() && err["code"] == "content_filter") {
            return {"", true};
        }
        throw Error(ErrorCode::MalformedProviderReply,
                    "provider error: " + err.value("message", err.dump()));
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
        throw Error(ErrorCode::MalformedProviderReply, "missing choices");
    }
    const auto& choice = j["choices"][0];
    if (choice.value("finish_reason", json()).is_string() &&
        choice["finish_reason"] == "content_filter") {
        return {"", true};
    }
    if (!choice.contains("message") || !choice["message"].is_object()) {
        throw Error(ErrorCode::MalformedProviderReply, "missing message");
    }
    const auto& message = choice["message"];
    if (message.contains("refusal") && message["refusal"].is_string()) return {"", true};
    std::string content;
    if (message.contains("content") && message["content"].is_string()) {
        content = message["content"].get<std::string>();
    }
    const auto head = lower(trim(content));
    for (const auto& phrase : provider.refusal_phrases) {
        if (!phrase.empty() && head.starts_with(lower(phrase))) return {content, true};
    }
    if (trim(content).empty()) throw Error(ErrorCode::MalformedProviderReply, "empty content");
    return {content, false};
}

WireReply HttpTransport::send(const ProviderHandle& provider, const ChatExchange& exchange) {
    json req;
    req["model"] = provider.model;
    req["messages"] = exchange.to_messages();
    std::vector<std::pair<std::string, std::string>> headers;
    if (!provider.auth_env.empty()) {
        if (const char* token = std::getenv(provider.auth_env.c_str()); token && *token) {
            headers.emplace_back("Authorization", std::string("Bearer ") + token);
        }
    }
    auto res = post_json(provider.endpoint, req.dump(), provider.timeout_s, headers);
    return {res.status, std::move(res.body)};
}

MockScript MockScript::from_json(const json& j) {
    MockScript script;
    auto reply_of = [](const json& e) {
        return MockReply{e.value("reply", std::string{}), e.value("refuse", false)};
    };
    if (j.contains("default")) script.fallback = {j["default"].get<std::string>(), false};
    if (j.contains("entries")) {
        for (const auto& [fp, e] : j["entries"].items()) script.by_fingerprint[fp] = reply_of(e);
    }
    if (j.contains("rules")) {
        for (const auto& r : j["rules"]) {
            MockRule rule;
            rule.contains = r.value("contains", std::string{});
            if (r.contains("turns")) rule.turns = r["turns"].get<std::size_t>();
            rule.reply = reply_of(r);
            script.rules.push_back(std::move(rule));
        }
    }
    return script;
}

MockReply MockScript::lookup(const ChatExchange& exchange) const {
    if (!by_fingerprint.empty()) {
        if (auto it = by_fingerprint.find(exchange.fingerprint()); it != by_fingerprint.end()) {
            return it->second;
        }
    }
    if (responder) {
        if (auto r = responder(exchange)) return *r;
    }
    const auto& user = exchange.last_user();
    for (const auto& rule : rules) {
        if (rule.turns && *rule.turns != exchange.size()) continue;
        if (user.find(rule.contains) != std::string::npos) return rule.reply;
    }
    return fallback;
}

WireReply MockTransport::send(const ProviderHandle&, const ChatExchange& exchange) {
    ++calls_;
    auto reply = script_.lookup(exchange);
    return {200, wire_body(reply.text, reply.refuse)};
}

// ------------------------------------------------------------ gateway

Gateway::Gateway(GatewayOptions options, std::shared_ptr<Clock> clock)
    : options_(std::move(options)),
      clock_(std::move(clock)),
      cache_(options_.cache_enabled ? options_.cache_dir : std::nullopt) {
    if (options_.workers == 0) options_.workers = 1;
}

const ProviderHandle& Gateway::add_provider(ProviderHandle handle,
                                            std::shared_ptr<Transport> transport) {
    handle.validate();
    if (!transport) {
        if (handle.is_mock()) {
            transport = std::make_shared<MockTransport>(MockScript{});
        } else {
            transport = std::make_shared<HttpTransport>();
        }
    }
    auto e = std::make_unique<Entry>();
    e->limiter = std::make_unique<RateLimiter>(handle.rpm, clock_);
    e->handle = std::move(handle);
    e->transport = std::move(transport);
    std::lock_guard lock(mu_);
    auto& slot = providers_[e->handle.id];
    slot = std::move(e);
    return slot->handle;
}

ProviderHandle Gateway::register_mock(MockScript script, std::string id) {
    ProviderHandle h;
    h.id = std::move(id);
    h.endpoint = "mock";
    h.model = "mock";
    h.rpm = 1'000'000;
    h.max_retries = 0;
    return add_provider(std::move(h), std::make_shared<MockTransport>(std::move(script)));
}

Gateway::Entry& Gateway::entry(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = providers_.find(id);
    if (it == providers_.end()) throw Error(ErrorCode::ConfigError, "unknown provider '" + id + "'");
    return *it->second;
}

const ProviderHandle& Gateway::provider(const std::string& id) const { return entry(id).handle; }

bool Gateway::has_provider(const std::string& id) const {
    std::lock_guard lock(mu_);
    return providers_.count(id) > 0;
}

std::size_t Gateway::network_calls(const std::string& provider_id) const {
    return entry(provider_id).calls.load();
}

const RateLimiter& Gateway::limiter(const std::string& provider_id) const {
    return *entry(provider_id).limiter;
}

std::shared_ptr<std::mutex> Gateway::key_gate(const std::string& key) {
    std::lock_guard lock(gates_mu_);
    if (gates_.size() > 4096) std::erase_if(gates_, [](const auto& kv) { return kv.second.expired(); });
    auto& slot = gates_[key];
    auto gate = slot.lock();
    if (!gate) {
        gate = std::make_shared<std::mutex>();
        slot = gate;
    }
    return gate;
}

ProviderResponse Gateway::complete(const std::string& provider_id, const ChatExchange& exchange) {
    return complete(provider(provider_id), exchange);
}

ProviderResponse Gateway::complete(const ProviderHandle& handle, const ChatExchange& exchange) {
    exchange.validate();
    if (exchange.last_user().empty()) {
        throw Error(ErrorCode::InvalidArgument, "exchange has no user turn");
    }
    auto& e = entry(handle.id);
    const auto& provider = e.handle;

    std::string key;
    std::shared_ptr<std::mutex> gate;
    std::unique_lock<std::mutex> in_flight;
    if (options_.cache_enabled) {
        key = ResponseCache::key_for(provider, exchange);
        // Identical concurrent requests wait here and then hit the cache.
        gate = key_gate(key);
        in_flight = std::unique_lock(*gate);
        if (auto hit = cache_.get(key)) {
            return {hit->raw, hit->filtered, 0.0, 0, true};
        }
    }

    ErrorCode last_code = ErrorCode::TransportError;
    std::string last_message;
    const int max_attempts = 1 + provider.max_retries;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        if (attempt > 1) {
            const double backoff = std::min(options_.backoff_max_s,
                                            options_.backoff_base_s * std::pow(2.0, attempt - 2));
            clock_->sleep_for(std::chrono::duration_cast<Clock::Duration>(
                std::chrono::duration<double>(backoff)));
        }
        e.limiter->acquire();
        const auto start = clock_->now();
        WireReply wire;
        ++e.calls;
        try {
            wire = e.transport->send(provider, exchange);
        } catch (const Error& err) {
            if (err.code() != ErrorCode::Timeout && err.code() != ErrorCode::TransportError) throw;
            last_code = err.code();
            last_message = err.what();
            continue;
        }
        const double latency_ms =
            std::chrono::duration<double, std::milli>(clock_->now() - start).count();

        if (wire.status == 429) {
            last_code = ErrorCode::RateLimitedExhausted;
            last_message = "HTTP 429";
            continue;
        }
        if (wire.status >= 500) {
            last_code = ErrorCode::TransportError;
            last_message = "HTTP " + std::to_string(wire.status);
            continue;
        }
        if (wire.status != 200) {
            // Some services report policy blocks as a 400 with a content_filter code.
            try {
                auto decoded = decode_wire_reply(wire.body, provider);
                if (decoded.filtered) {
                    if (options_.cache_enabled) cache_.put(key, decoded);
                    return {decoded.raw, true, latency_ms, attempt, false};
                }
            } catch (const Error&) {
            }
            throw Error(ErrorCode::TransportError,
                        provider.id + ": HTTP " + std::to_string(wire.status) + " " + wire.body);
        }
        auto decoded = decode_wire_reply(wire.body, provider);
        if (options_.cache_enabled) cache_.put(key, decoded);
        return {decoded.raw, decoded.filtered, latency_ms, attempt, false};
    }
    throw Error(last_code, provider.id + ": giving up after " + std::to_string(max_attempts) +
                               " attempts: " + last_message);
}

}  // namespace modforge
