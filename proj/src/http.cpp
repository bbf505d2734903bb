#include "modforge/http.hpp"

#include <cmath>

#include <httplib.h>

#include "modforge/error.hpp"

namespace modforge {

Url parse_url(const std::string& url) {
    Url out;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidArgument, "bad url " + url);
    out.scheme = url.substr(0, scheme_end);
    if (out.scheme != "http" && out.scheme != "https") {
        throw Error(ErrorCode::InvalidArgument, "unsupported scheme in " + url);
    }
    auto rest = url.substr(scheme_end + 3);
    auto slash = rest.find('/');
    auto authority = rest.substr(0, slash);
    out.path = slash == std::string::npos ? "/" : rest.substr(slash);
    auto colon = authority.rfind(':');
    if (colon != std::string::npos && authority.find(']') == std::string::npos) {
        out.host = authority.substr(0, colon);
        try {
            out.port = std::stoi(authority.substr(colon + 1));
        } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidArgument, "bad port in " + url);
        }
    } else {
        out.host = authority;
        out.port = out.scheme == "https" ? 443 : 80;
    }
    if (out.host.empty()) throw Error(ErrorCode::InvalidArgument, "missing host in " + url);
    return out;
}

HttpResult post_json(const std::string& url, const std::string& body, double timeout_s,
                     const std::vector<std::pair<std::string, std::string>>& headers) {
    auto u = parse_url(url);
    httplib::Client client(u.scheme + "://" + u.host + ":" + std::to_string(u.port));
    const auto sec = static_cast<time_t>(std::floor(timeout_s));
    const auto usec = static_cast<time_t>((timeout_s - std::floor(timeout_s)) * 1e6);
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);
    httplib::Headers hdrs;
    for (const auto& [k, v] : headers) hdrs.emplace(k, v);
    auto res = client.Post(u.path, hdrs, body, "application/json");
    if (!res) {
        auto err = res.error();
        if (err == httplib::Error::Read || err == httplib::Error::Write ||
            err == httplib::Error::ConnectionTimeout) {
            throw Error(ErrorCode::Timeout, url + ": " + httplib::to_string(err));
        }
        throw Error(ErrorCode::TransportError, url + ": " + httplib::to_string(err));
    }
    return {res->status, res->body};
}

}  // namespace modforge
