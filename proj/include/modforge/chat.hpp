#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace modforge {

enum class Role { System, User, Assistant };

const char* to_string(Role role);
Role role_from_string(const std::string& name);

struct ChatTurn {
    Role role;
    std::string content;

    friend bool operator==(const ChatTurn&, const ChatTurn&) = default;
};

/// Ordered conversation sent to a chat model. After any leading system turns
/// the roles must go user, assistant, user, ...
class ChatExchange {
public:
    ChatExchange() = default;
    explicit ChatExchange(std::vector<ChatTurn> turns);

    static ChatExchange single_user(std::string content);

    const std::vector<ChatTurn>& turns() const { return turns_; }
    std::size_t size() const { return turns_.size(); }

    /// Appends a turn; throws InvalidArgument if it breaks alternation.
    ChatExchange& append(Role role, std::string content);

    /// Content of the last user turn, or empty.
    const std::string& last_user() const;

    bool valid() const;
    /// Throws InvalidArgument describing the first violation.
    void validate() const;

    /// `[{"role":...,"content":...}, ...]`
    nlohmann::json to_messages() const;
    static ChatExchange from_messages(const nlohmann::json& messages);

    /// SHA-256 over the canonical messages JSON.
    std::string fingerprint() const;

    friend bool operator==(const ChatExchange&, const ChatExchange&) = default;

private:
    std::vector<ChatTurn> turns_;
};

}  // namespace modforge
