#include "modforge/chat.hpp"

#include <nlohmann/json.hpp>

#include "modforge/error.hpp"
#include "modforge/io.hpp"

namespace modforge {

const char* to_string(Role role) {
    switch (role) {
        case Role::System:
            return "system";
        case Role::User:
            return "user";
        case Role::Assistant:
            return "assistant";
    }
    return "user";
}

Role role_from_string(const std::string& name) {
    if (name == "system") return Role::System;
    if (name == "user") return Role::User;
    if (name == "assistant") return Role::Assistant;
    throw Error(ErrorCode::InvalidArgument, "unknown role '" + name + "'");
}

ChatExchange::ChatExchange(std::vector<ChatTurn> turns) : turns_(std::move(turns)) { validate(); }

ChatExchange ChatExchange::single_user(std::string content) {
    return ChatExchange({{Role::User, std::move(content)}});
}

ChatExchange& ChatExchange::append(Role role, std::string content) {
    turns_.push_back({role, std::move(content)});
    if (!valid()) {
        turns_.pop_back();
        throw Error(ErrorCode::InvalidArgument,
                    std::string("turn '") + to_string(role) + "' breaks role alternation");
    }
    return *this;
}

const std::string& ChatExchange::last_user() const {
    static const std::string kEmpty;
    for (auto it = turns_.rbegin(); it != turns_.rend(); ++it) {
        if (it->role == Role::User) return it->content;
    }
    return kEmpty;
}

bool ChatExchange::valid() const {
    std::size_t i = 0;
    while (i < turns_.size() && turns_[i].role == Role::System) ++i;
    Role expected = Role::User;
    for (; i < turns_.size(); ++i) {
        if (turns_[i].role != expected) return false;
        expected = expected == Role::User ? Role::Assistant : Role::User;
    }
    return true;
}

void ChatExchange::validate() const {
    if (!valid()) {
        throw Error(ErrorCode::InvalidArgument,
                    "chat turns must start with user after system turns and alternate");
    }
}

nlohmann::json ChatExchange::to_messages() const {
    auto arr = nlohmann::json::array();
    for (const auto& t : turns_) {
        arr.push_back({{"role", to_string(t.role)}, {"content", t.content}});
    }
    return arr;
}

ChatExchange ChatExchange::from_messages(const nlohmann::json& messages) {
    std::vector<ChatTurn> turns;
    for (const auto& m : messages) {
        turns.push_back({role_from_string(m.at("role").get<std::string>()),
                         m.at("content").get<std::string>()});
    }
    return ChatExchange(std::move(turns));
}

std::string ChatExchange::fingerprint() const { return sha256_hex(to_messages().dump()); }

}  // namespace modforge
