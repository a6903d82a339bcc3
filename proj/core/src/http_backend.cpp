#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>

#include "shear/backend.hpp"
#include "shear/errors.hpp"

#include <httplib.h>
#include <json.hpp>

namespace shear {

namespace {

using nlohmann::json;

// Splits "http://host:port/prefix" into the client target and a path
// prefix to prepend to request paths.
void split_base_url(const std::string& base_url, std::string& host_part,
                    std::string& path_prefix) {
  const size_t scheme = base_url.find("://");
  const size_t path_start =
      base_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) {
    host_part = base_url;
    path_prefix.clear();
    return;
  }
  host_part = base_url.substr(0, path_start);
  path_prefix = base_url.substr(path_start);
  while (!path_prefix.empty() && path_prefix.back() == '/') path_prefix.pop_back();
}

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(BackendDescriptor d) : Backend(std::move(d)) {
    split_base_url(descriptor().base_url, host_, path_prefix_);
    if (!descriptor().auth_env_var.empty()) {
      const char* token = std::getenv(descriptor().auth_env_var.c_str());
      if (token == nullptr || *token == '\0') {
        throw ConfigError("auth_env_var " + descriptor().auth_env_var +
                          " is not set in the environment");
      }
      bearer_ = token;
    }
  }

 protected:
  std::string generate_impl(const GenRequest& request) override {
    json body{
        {"model", descriptor().model},
        {"prompt", request.prompt_text},
        {"max_tokens", request.max_new_tokens},
        {"temperature", request.temperature},
    };
    if (!request.stop.empty()) body["stop"] = request.stop;

    httplib::Client client(host_);
    const auto timeout = std::chrono::duration<double>(descriptor().request_timeout_s);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!bearer_.empty()) headers.emplace("Authorization", "Bearer " + bearer_);

    httplib::Result res = client.Post(path_prefix_ + "/v1/completions", headers,
                                      body.dump(), "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
          err == httplib::Error::Write) {
        throw BackendError(BackendError::Kind::Timeout,
                           "request to " + descriptor().base_url +
                               " timed out: " + httplib::to_string(err));
      }
      throw BackendError(BackendError::Kind::Unavailable,
                         "request to " + descriptor().base_url +
                             " failed: " + httplib::to_string(err));
    }
    if (res->status < 200 || res->status >= 300) {
      std::string detail = res->body.substr(0, 200);
      throw BackendError(BackendError::Kind::Rejected,
                         "endpoint returned HTTP " + std::to_string(res->status) +
                             (detail.empty() ? "" : ": " + detail),
                         res->status);
    }
    try {
      json parsed = json::parse(res->body);
      return parsed.at("choices").at(0).at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw BackendError(BackendError::Kind::Rejected,
                         std::string("malformed completion response: ") + e.what(),
                         res->status);
    }
  }

 private:
  std::string host_;
  std::string path_prefix_;
  std::string bearer_;
};

}  // namespace

std::unique_ptr<Backend> make_http_backend(const BackendDescriptor& descriptor) {
  return std::make_unique<HttpBackend>(descriptor);
}

}  // namespace shear
