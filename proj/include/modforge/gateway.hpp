#pragma once

#include <atomic>
#include <chrono>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "modforge/chat.hpp"

namespace modforge {

/// Connection settings for one chat model. The auth token itself never lives
/// here, only the name of the environment variable holding it.
struct ProviderHandle {
    std::string id;
    std::string endpoint = "mock";  // "mock" or an http(s) chat-completions URL
    std::string model;
    std::string auth_env;
    double timeout_s = 60.0;
    int max_retries = 3;
    int rpm = 60;
    /// Reply prefixes treated as a content-policy refusal when the wire
    /// carries no explicit filter flag. Matched case-insensitively.
    std::vector<std::string> refusal_phrases = default_refusal_phrases();

    bool is_mock() const { return endpoint == "mock"; }
    /// Throws ConfigError when timeout/retries/rpm are out of range.
    void validate() const;

    static std::vector<std::string> default_refusal_phrases();
};

struct ProviderResponse {
    std::string raw;
    bool filtered = false;
    double latency_ms = 0.0;
    int attempts = 0;
    bool cache_hit = false;
};

// ------------------------------------------------------------------ clock

/// Time source for the rate limiter and retry backoff.
class Clock {
public:
    using Duration = std::chrono::nanoseconds;
    virtual ~Clock() = default;
    virtual Duration now() const = 0;
    virtual void sleep_for(Duration d) = 0;
};

class SystemClock final : public Clock {
public:
    Duration now() const override;
    void sleep_for(Duration d) override;
};

/// Virtual time: sleeping advances the clock instantly.
class ManualClock final : public Clock {
public:
    Duration now() const override;
    void sleep_for(Duration d) override;
    void advance(Duration d) { sleep_for(d); }

private:
    mutable std::mutex mu_;
    Duration now_{0};
};

/// At most `rpm` acquisitions in any sliding 60 s window.
class RateLimiter {
public:
    RateLimiter(int rpm, std::shared_ptr<Clock> clock);
    void acquire();
    /// Every acquisition timestamp so far, oldest first.
    std::vector<Clock::Duration> history() const;

private:
    int rpm_;
    std::shared_ptr<Clock> clock_;
    mutable std::mutex mu_;
    std::deque<Clock::Duration> window_;
    std::vector<Clock::Duration> all_;
};

// ------------------------------------------------------------------ cache

struct CachedReply {
    std::string raw;
    bool filtered = false;
};

/// Content-addressed response store: in memory always, and one JSON file per
/// key under `dir` when a directory is configured.
class ResponseCache {
public:
    explicit ResponseCache(std::optional<std::filesystem::path> dir = std::nullopt);

    std::optional<CachedReply> get(const std::string& key);
    void put(const std::string& key, const CachedReply& reply);

    static std::string key_for(const ProviderHandle& provider, const ChatExchange& exchange);

private:
    std::filesystem::path file_for(const std::string& key) const;

    std::optional<std::filesystem::path> dir_;
    std::mutex mu_;
    std::map<std::string, CachedReply> memory_;
};

// --------------------------------------------------------------- transport

struct WireReply {
    int status = 200;
    std::string body;  // chat-completions JSON
};

class Transport {
public:
    virtual ~Transport() = default;
    /// One network attempt. Throws Timeout or TransportError.
    virtual WireReply send(const ProviderHandle& provider, const ChatExchange& exchange) = 0;
};

/// POSTs `{"model":..., "messages":[...]}` and expects
/// `{"choices":[{"message":{"content":...}}]}` back.
class HttpTransport final : public Transport {
public:
    WireReply send(const ProviderHandle& provider, const ChatExchange& exchange) override;
};

struct MockReply {
    std::string text;
    bool refuse = false;
};

/// Matches on the last user turn, optionally restricted to an exchange length.
struct MockRule {
    std::string contains;
    std::optional<std::size_t> turns;
    MockReply reply;
};

/// Deterministic provider script. Lookup order: exact exchange fingerprint,
/// responder callback, rules in order, then the fallback reply.
struct MockScript {
    std::map<std::string, MockReply> by_fingerprint;
    std::function<std::optional<MockReply>(const ChatExchange&)> responder;
    std::vector<MockRule> rules;
    MockReply fallback{"Classification results: Harmless", false};

    /// `{"default": "...", "entries": {"<fp>": {"reply": "..."} | {"refuse": true}},
    ///   "rules": [{"contains": "...", "turns": 3, "reply": "...", "refuse": false}]}`
    static MockScript from_json(const nlohmann::json& j);
    MockReply lookup(const ChatExchange& exchange) const;
};

class MockTransport final : public Transport {
public:
    explicit MockTransport(MockScript script) : script_(std::move(script)) {}
    WireReply send(const ProviderHandle& provider, const ChatExchange& exchange) override;
    std::size_t calls() const { return calls_; }

private:
    MockScript script_;
    std::atomic<std::size_t> calls_{0};
};

/// Renders a reply in the chat-completions wire shape; refusals carry
/// finish_reason "content_filter".
std::string wire_body(const std::string& content, bool refused);

/// Decodes a chat-completions body. Throws MalformedProviderReply.
CachedReply decode_wire_reply(const std::string& body, const ProviderHandle& provider);

// ----------------------------------------------------------------- gateway

struct GatewayOptions {
    std::optional<std::filesystem::path> cache_dir;
    bool cache_enabled = true;
    double backoff_base_s = 1.0;
    double backoff_max_s = 30.0;
    std::size_t workers = 4;
};

/// Uniform client over the configured providers: dispatch, retries with
/// exponential backoff, rate limiting and response caching. Thread-safe.
class Gateway {
public:
    explicit Gateway(GatewayOptions options = {},
                     std::shared_ptr<Clock> clock = std::make_shared<SystemClock>());

    /// Registers a provider. A null transport selects HttpTransport, or an
    /// empty-script mock when the endpoint is "mock".
    const ProviderHandle& add_provider(ProviderHandle handle,
                                       std::shared_ptr<Transport> transport = nullptr);

    /// Registers a scripted mock under `id`.
    ProviderHandle register_mock(MockScript script, std::string id = "mock");

    const ProviderHandle& provider(const std::string& id) const;
    bool has_provider(const std::string& id) const;

    ProviderResponse complete(const ProviderHandle& provider, const ChatExchange& exchange);
    ProviderResponse complete(const std::string& provider_id, const ChatExchange& exchange);

    /// Network attempts issued so far for a provider (cache hits excluded).
    std::size_t network_calls(const std::string& provider_id) const;
    std::size_t workers() const { return options_.workers; }
    const RateLimiter& limiter(const std::string& provider_id) const;

private:
    struct Entry {
        ProviderHandle handle;
        std::shared_ptr<Transport> transport;
        std::unique_ptr<RateLimiter> limiter;
        std::atomic<std::size_t> calls{0};
    };

    Entry& entry(const std::string& id) const;
    std::shared_ptr<std::mutex> key_gate(const std::string& key);

    GatewayOptions options_;
    std::shared_ptr<Clock> clock_;
    ResponseCache cache_;
    mutable std::mutex mu_;
    std::map<std::string, std::unique_ptr<Entry>> providers_;
    std::mutex gates_mu_;
    std::map<std::string, std::weak_ptr<std::mutex>> gates_;  // in-flight cache keys
};

}  // namespace modforge
