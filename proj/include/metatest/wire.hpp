#pragma once

#include "metatest/kernel.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

namespace metatest {

/// host:port, e.g. "127.0.0.1:8080".
struct Address {
  std::string host;
  int port = 0;

  static Address parse(std::string_view text);
  std::string text() const { return host + ":" + std::to_string(port); }
};

/// POST body: one `name=value` pair per line; '%', '=', CR and LF in
/// values are percent-encoded.
std::string encode_submission(const std::map<std::string, std::string>& values);
std::map<std::string, std::string> decode_submission(std::string_view body);

std::string outcome_to_wire_json(const ClickResult& result);
ClickResult outcome_from_wire_json(std::string_view json);

/// Serves a Site over HTTP. Requests that mutate the site run one at a time.
class WireServer {
public:
  WireServer(Site& site, Address bind);
  ~WireServer();

  WireServer(const WireServer&) = delete;
  WireServer& operator=(const WireServer&) = delete;

  /// Binds and starts serving on a background thread. Port 0 picks a free port.
  void start();
  void stop();
  void wait();
  int port() const noexcept { return port_; }
  std::string address() const { return bind_.host + ":" + std::to_string(port_); }

private:
  struct Impl;
  Site& site_;
  Address bind_;
  int port_ = 0;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
};

struct WireSubmitResult {
  bool found = false;
  ClickResult result;
};

class WireClient {
public:
  explicit WireClient(Address address);
  ~WireClient();

  /// nullopt when the server answers not_found. Throws connection errors.
  std::optional<FormSpec> get_form(const std::string& url_path);
  WireSubmitResult post(const std::string& url_path, const std::map<std::string, std::string>& values,
                        const std::string& userid);
  std::optional<FormSpec> get_form_by_id(const std::string& form_id);
  /// Rows of one table, read atomically on the server.
  Table rows(const std::string& form_id);

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace metatest
