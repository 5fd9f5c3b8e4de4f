#pragma once

#include <chrono>
#include <string>

#include <httplib.h>

#include "notegen/error.hpp"

namespace notegen::http {

struct Endpoint {
  std::string host_port;  // "http://host:port" as accepted by httplib::Client
  std::string path;       // absolute path, may be "/"
};

// Splits "http://host[:port][/prefix]" and joins the prefix with `path`.
inline Endpoint parse_endpoint(const std::string& base, const std::string& path) {
  const std::string scheme = "http://";
  if (base.rfind("https://", 0) == 0)
    throw ConfigError("https endpoints are not supported; use a local http endpoint: " + base);
  if (base.rfind(scheme, 0) != 0) throw ConfigError("endpoint must start with http://: " + base);
  const auto slash = base.find('/', scheme.size());
  Endpoint ep;
  ep.host_port = base.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : base.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  std::string suffix = path;
  if (!suffix.empty() && suffix.front() != '/') suffix.insert(suffix.begin(), '/');
  ep.path = prefix + suffix;
  if (ep.path.empty()) ep.path = "/";
  if (ep.host_port.size() == scheme.size()) throw ConfigError("endpoint has no host: " + base);
  return ep;
}

struct Reply {
  bool transport_ok = false;
  std::string transport_error;
  int status = 0;
  std::string body;
};

inline Reply post_json(const Endpoint& ep, const std::string& body, const std::string& bearer,
                       std::chrono::milliseconds timeout) {
  httplib::Client client(ep.host_port);
  const auto secs = timeout.count() / 1000;
  const auto usecs = (timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);
  auto res = client.Post(ep.path, headers, body, "application/json");
  Reply reply;
  if (!res) {
    reply.transport_error = httplib::to_string(res.error());
    return reply;
  }
  reply.transport_ok = true;
  reply.status = res->status;
  reply.body = res->body;
  return reply;
}

inline bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

inline std::string excerpt(const std::string& body, std::size_t limit = 200) {
  if (body.size() <= limit) return body;
  return body.substr(0, limit) + "...";
}

}  // namespace notegen::http
