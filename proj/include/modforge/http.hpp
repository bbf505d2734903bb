#pragma once

#include <string>
#include <utility>
#include <vector>

namespace modforge {

struct Url {
    std::string scheme;  // "http" or "https"
    std::string host;
    int port = 0;
    std::string path;  // always begins with '/'
};

/// Throws InvalidArgument for anything that is not http(s)://host[:port][/path].
Url parse_url(const std::string& url);

struct HttpResult {
    int status = 0;
    std::string body;
};

/// Blocking JSON POST. Connection failures throw TransportError, read
/// timeouts throw Timeout.
HttpResult post_json(const std::string& url, const std::string& body, double timeout_s,
                     const std::vector<std::pair<std::string, std::string>>& headers = {});

}  // namespace modforge
