#include "metatest/wire.hpp"

#include "metatest/error.hpp"

#include "httplib.h"
#include "json.hpp"

#include <charconv>

namespace metatest {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kUserHeader = "X-Metatest-User";
constexpr std::string_view kRowsPrefix = "/_rows/";
constexpr std::string_view kFormsPrefix = "/_forms/";

std::string percent_encode(std::string_view text) {
  static constexpr char hex[] = "0123456789ABCDEF";
  std::string out;
  for (char c : text) {
    if (c == '%' || c == '=' || c == '\n' || c == '\r') {
      auto u = static_cast<unsigned char>(c);
      out += '%';
      out += hex[u >> 4];
      out += hex[u & 0xF];
    } else {
      out += c;
    }
  }
  return out;
}

std::string percent_decode(std::string_view text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '%') {
      out += text[i];
      continue;
    }
    unsigned value = 0;
    if (i + 2 >= text.size())
      throw Error(ErrorCode::invalid_argument, "truncated percent escape");
    auto [ptr, ec] = std::from_chars(text.data() + i + 1, text.data() + i + 3, value, 16);
    if (ec != std::errc{} || ptr != text.data() + i + 3)
      throw Error(ErrorCode::invalid_argument, "bad percent escape");
    out += static_cast<char>(value);
    i += 2;
  }
  return out;
}

std::string json_status(std::string_view status) {
  ordered_json j;
  j["status"] = status;
  return j.dump();
}

} // namespace

Address Address::parse(std::string_view text) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0)
    throw Error(ErrorCode::invalid_argument, "address must be host:port, got \"" + std::string(text) + "\"");
  Address a;
  a.host = std::string(text.substr(0, colon));
  auto port_text = text.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), a.port);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || a.port < 0 || a.port > 65535)
    throw Error(ErrorCode::invalid_argument, "bad port in \"" + std::string(text) + "\"");
  return a;
}

std::string encode_submission(const std::map<std::string, std::string>& values) {
  std::string out;
  for (const auto& [name, value] : values)
    out += name + "=" + percent_encode(value) + "\n";
  return out;
}

std::map<std::string, std::string> decode_submission(std::string_view body) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  while (pos < body.size()) {
    auto end = body.find('\n', pos);
    if (end == std::string_view::npos)
      end = body.size();
    auto line = body.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r')
      line.remove_suffix(1);
    if (line.empty())
      continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorCode::invalid_argument, "submission line without '='");
    std::string name(line.substr(0, eq));
    if (!out.emplace(name, percent_decode(line.substr(eq + 1))).second)
      throw Error(ErrorCode::invalid_argument, "duplicate field \"" + name + "\" in submission");
  }
  return out;
}

std::string outcome_to_wire_json(const ClickResult& result) {
  ordered_json j;
  if (result.outcome.accepted) {
    j["status"] = "accepted";
    j["record_seq"] = result.record_seq.value_or(0);
  } else {
    j["status"] = "rejected";
    j["failures"] = ordered_json::array();
    for (const auto& f : result.outcome.failures)
      j["failures"].push_back({{"field", f.field}, {"code", to_string(f.code)}});
  }
  return j.dump();
}

ClickResult outcome_from_wire_json(std::string_view text) {
  ClickResult r;
  r.submitted = true;
  try {
    json j = json::parse(text);
    auto status = j.at("status").get<std::string>();
    if (status == "accepted") {
      r.outcome.accepted = true;
      r.record_seq = j.at("record_seq").get<std::int64_t>();
    } else if (status == "rejected") {
      r.outcome.accepted = false;
      for (auto& f : j.at("failures")) {
        auto code = parse_failure_code(f.at("code").get<std::string>());
        if (!code)
          throw Error(ErrorCode::connection, "unknown failure code in response");
        r.outcome.failures.push_back({f.at("field").get<std::string>(), *code});
      }
    } else {
      throw Error(ErrorCode::connection, "unexpected status \"" + status + "\"");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::connection, std::string("malformed response: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------

struct WireServer::Impl {
  httplib::Server server;
  std::mutex submit_mu;
};

WireServer::WireServer(Site& site, Address bind)
    : site_(site), bind_(std::move(bind)), impl_(std::make_unique<Impl>()) {
  auto& svr = impl_->server;
  svr.Get(R"(.*)", [this](const httplib::Request& req, httplib::Response& res) {
    if (req.path.rfind(kRowsPrefix, 0) == 0) {
      auto form_id = req.path.substr(kRowsPrefix.size());
      if (!site_.app().find_form(form_id)) {
        res.status = 404;
        res.set_content(json_status("not_found"), "application/json");
        return;
      }
      auto store = site_.store();
      ordered_json rows = ordered_json::array();
      if (auto it = store.tables.find(form_id); it != store.tables.end())
        for (const auto& row : it->second)
          rows.push_back(ordered_json::parse(row_to_json(row)));
      res.set_content(rows.dump(), "application/json");
      return;
    }
    const FormSpec* form = req.path.rfind(kFormsPrefix, 0) == 0
                               ? site_.app().find_form(req.path.substr(kFormsPrefix.size()))
                               : site_.app().find_form_by_url(req.path);
    if (!form) {
      res.status = 404;
      res.set_content(json_status("not_found"), "application/json");
      return;
    }
    res.set_content(form_descriptor(*form), "application/json");
  });
  svr.Post(R"(.*)", [this](const httplib::Request& req, httplib::Response& res) {
    std::string userid = req.has_header(kUserHeader) ? req.get_header_value(kUserHeader) : "wire";
    try {
      auto values = decode_submission(req.body);
      std::lock_guard lock(impl_->submit_mu);
      auto result = site_.submit_values(req.path, userid, values);
      if (!result) {
        res.status = 404;
        res.set_content(json_status("not_found"), "application/json");
        return;
      }
      res.set_content(outcome_to_wire_json(*result), "application/json");
    } catch (const Error& e) {
      ordered_json j;
      j["status"] = "error";
      j["code"] = to_string(e.code());
      j["message"] = e.what();
      res.status = e.code() == ErrorCode::invalid_argument ? 400 : 422;
      res.set_content(j.dump(), "application/json");
    }
  });
}

WireServer::~WireServer() { stop(); }

void WireServer::start() {
  auto& svr = impl_->server;
  if (bind_.port == 0) {
    port_ = svr.bind_to_any_port(bind_.host);
    if (port_ < 0)
      throw Error(ErrorCode::connection, "cannot bind " + bind_.host);
  } else {
    if (!svr.bind_to_port(bind_.host, bind_.port))
      throw Error(ErrorCode::connection, "cannot bind " + bind_.text());
    port_ = bind_.port;
  }
  thread_ = std::thread([&svr] { svr.listen_after_bind(); });
  svr.wait_until_ready();
}

void WireServer::stop() {
  if (impl_)
    impl_->server.stop();
  if (thread_.joinable())
    thread_.join();
}

void WireServer::wait() {
  if (thread_.joinable())
    thread_.join();
}

// ---------------------------------------------------------------------------

struct WireClient::Impl {
  explicit Impl(const Address& a) : address(a), client(a.host, a.port) {
    client.set_connection_timeout(5);
    client.set_read_timeout(30);
  }
  Address address;
  httplib::Client client;

  [[noreturn]] void fail(const httplib::Result& r) {
    throw Error(ErrorCode::connection,
                "cannot reach " + address.text() + ": " + httplib::to_string(r.error()));
  }
};

WireClient::WireClient(Address address) : impl_(std::make_unique<Impl>(address)) {}
WireClient::~WireClient() = default;

std::optional<FormSpec> WireClient::get_form(const std::string& url_path) {
  auto r = impl_->client.Get(url_path);
  if (!r)
    impl_->fail(r);
  if (r->status == 404)
    return std::nullopt;
  if (r->status != 200)
    throw Error(ErrorCode::connection, "GET " + url_path + " returned HTTP " + std::to_string(r->status));
  return parse_form_descriptor(r->body);
}

WireSubmitResult WireClient::post(const std::string& url_path, const std::map<std::string, std::string>& values,
                                  const std::string& userid) {
  httplib::Headers headers{{kUserHeader, userid}};
  auto r = impl_->client.Post(url_path, headers, encode_submission(values), "text/plain");
  if (!r)
    impl_->fail(r);
  WireSubmitResult out;
  if (r->status == 404)
    return out;
  if (r->status != 200) {
    std::string code = "connection";
    std::string message = "POST " + url_path + " returned HTTP " + std::to_string(r->status);
    try {
      json j = json::parse(r->body);
      code = j.value("code", code);
      message = j.value("message", message);
    } catch (const json::exception&) {
    }
    throw Error(code == "element_not_found" ? ErrorCode::element_not_found : ErrorCode::connection, message);
  }
  out.found = true;
  out.result = outcome_from_wire_json(r->body);
  return out;
}

std::optional<FormSpec> WireClient::get_form_by_id(const std::string& form_id) {
  return get_form(std::string(kFormsPrefix) + form_id);
}

Table WireClient::rows(const std::string& form_id) {
  std::string path = std::string(kRowsPrefix) + form_id;
  auto r = impl_->client.Get(path);
  if (!r)
    impl_->fail(r);
  if (r->status != 200)
    throw Error(ErrorCode::connection, "GET " + path + " returned HTTP " + std::to_string(r->status));
  Table table;
  try {
    for (auto& row : json::parse(r->body))
      table.push_back(row_from_json(row.dump()));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::connection, std::string("malformed rows response: ") + e.what());
  }
  return table;
}

} // namespace metatest
