#include "metatest/metamodel.hpp"

#include "metatest/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <set>

namespace metatest {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(DataType type) {
  switch (type) {
  case DataType::integer: return "integer";
  case DataType::numeric: return "numeric";
  case DataType::text: return "text";
  case DataType::checkbox: return "checkbox";
  case DataType::select_list: return "select_list";
  }
  return "text";
}

std::optional<DataType> parse_data_type(std::string_view text) {
  for (auto t : {DataType::integer, DataType::numeric, DataType::text, DataType::checkbox,
                 DataType::select_list})
    if (to_string(t) == text)
      return t;
  return std::nullopt;
}

std::string_view to_string(FailureCode code) {
  switch (code) {
  case FailureCode::missing_required: return "missing_required";
  case FailureCode::not_integer: return "not_integer";
  case FailureCode::not_numeric: return "not_numeric";
  case FailureCode::below_min: return "below_min";
  case FailureCode::above_max: return "above_max";
  case FailureCode::too_wide: return "too_wide";
  case FailureCode::not_an_option: return "not_an_option";
  case FailureCode::bad_checkbox: return "bad_checkbox";
  }
  return "missing_required";
}

std::optional<FailureCode> parse_failure_code(std::string_view text) {
  for (auto c : {FailureCode::missing_required, FailureCode::not_integer, FailureCode::not_numeric,
                 FailureCode::below_min, FailureCode::above_max, FailureCode::too_wide,
                 FailureCode::not_an_option, FailureCode::bad_checkbox})
    if (to_string(c) == text)
      return c;
  return std::nullopt;
}

bool is_identifier(std::string_view text) {
  if (text.empty() || (text.front() >= '0' && text.front() <= '9'))
    return false;
  return std::all_of(text.begin(), text.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
  });
}

std::size_t utf8_length(std::string_view text) {
  return static_cast<std::size_t>(std::count_if(
      text.begin(), text.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

const FieldSpec* FormSpec::find_field(std::string_view entity_name) const {
  auto it = std::find_if(fields.begin(), fields.end(),
                         [&](const FieldSpec& f) { return f.entity_name == entity_name; });
  return it == fields.end() ? nullptr : &*it;
}

const FormSpec* AppSpec::find_form(std::string_view form_id) const {
  auto it = std::find_if(forms.begin(), forms.end(),
                         [&](const FormSpec& f) { return f.form_id == form_id; });
  return it == forms.end() ? nullptr : &*it;
}

const FormSpec* AppSpec::find_form_by_url(std::string_view url_path) const {
  auto it = std::find_if(forms.begin(), forms.end(),
                         [&](const FormSpec& f) { return f.url_path == url_path; });
  return it == forms.end() ? nullptr : &*it;
}

bool has_errors(const std::vector<MetadataDiagnostic>& diagnostics) {
  return std::any_of(diagnostics.begin(), diagnostics.end(),
                     [](const MetadataDiagnostic& d) { return d.severity == Severity::error; });
}

// ---------------------------------------------------------------------------
// JSON reading

namespace {

void position_of(std::string_view source, std::size_t byte, int& line, int& column) {
  line = 1;
  column = 1;
  for (std::size_t i = 0; i < byte && i < source.size(); ++i) {
    if (source[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
}

// nlohmann keeps the last duplicate silently; reject them while parsing.
json parse_strict(std::string_view source) {
  std::vector<std::set<std::string>> seen;
  std::vector<std::string> path;
  std::string duplicate;
  json::parser_callback_t cb = [&](int, json::parse_event_t event, json& parsed) {
    switch (event) {
    case json::parse_event_t::object_start:
      seen.emplace_back();
      break;
    case json::parse_event_t::object_end:
      if (!seen.empty())
        seen.pop_back();
      break;
    case json::parse_event_t::key: {
      auto key = parsed.get<std::string>();
      if (!seen.empty() && !seen.back().insert(key).second && duplicate.empty())
        duplicate = key;
      break;
    }
    default:
      break;
    }
    return true;
  };
  try {
    json doc = json::parse(source.begin(), source.end(), cb);
    if (!duplicate.empty())
      throw Error(ErrorCode::duplicate_key, "duplicate key \"" + duplicate + "\"");
    return doc;
  } catch (const json::parse_error& e) {
    int line = 0, column = 0;
    position_of(source, e.byte > 0 ? e.byte - 1 : 0, line, column);
    throw Error(ErrorCode::syntax, e.what(), line, column);
  }
}

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::schema, where + ": " + what);
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object())
    schema_error(where, "expected an object");
  for (auto& [key, _] : obj.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      schema_error(where, "unknown key \"" + key + "\"");
}

std::string get_string(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end())
    schema_error(where, std::string("missing \"") + key + "\"");
  if (!it->is_string())
    schema_error(where, std::string("\"") + key + "\" must be a string");
  return it->get<std::string>();
}

Decimal get_number(const json& value, const std::string& where, const char* key) {
  if (!value.is_number())
    schema_error(where, std::string("\"") + key + "\" must be a number");
  auto d = Decimal::parse_json_number(value.dump());
  if (!d)
    schema_error(where, std::string("\"") + key + "\" is not a finite number");
  return *d;
}

FieldSpec field_from_json(const json& j, const std::string& form_where) {
  std::string where = form_where + "/fields";
  check_keys(j, where,
             {"entity_name", "data_type", "required", "max_width", "min_value", "max_value", "options",
              "label"});
  FieldSpec f;
  f.entity_name = get_string(j, "entity_name", where);
  where = form_where + "/" + f.entity_name;
  auto type_text = get_string(j, "data_type", where);
  auto type = parse_data_type(type_text);
  if (!type)
    throw Error(ErrorCode::unknown_data_type, where + ": unknown data_type \"" + type_text + "\"");
  f.data_type = *type;
  if (auto it = j.find("required"); it != j.end()) {
    if (!it->is_boolean())
      schema_error(where, "\"required\" must be true or false");
    f.required = it->get<bool>();
  }
  if (auto it = j.find("max_width"); it != j.end()) {
    if (!it->is_number_integer())
      schema_error(where, "\"max_width\" must be an integer");
    f.max_width = it->get<std::int64_t>();
  }
  if (auto it = j.find("min_value"); it != j.end())
    f.min_value = get_number(*it, where, "min_value");
  if (auto it = j.find("max_value"); it != j.end())
    f.max_value = get_number(*it, where, "max_value");
  if (auto it = j.find("options"); it != j.end()) {
    if (!it->is_array())
      schema_error(where, "\"options\" must be an array of strings");
    std::vector<std::string> options;
    for (auto& o : *it) {
      if (!o.is_string())
        schema_error(where, "\"options\" must be an array of strings");
      options.push_back(o.get<std::string>());
    }
    f.options = std::move(options);
  }
  if (auto it = j.find("label"); it != j.end()) {
    if (!it->is_string())
      schema_error(where, "\"label\" must be a string");
    f.label = it->get<std::string>();
  }
  return f;
}

FormSpec form_from_json(const json& j, const std::string& app_where) {
  std::string where = app_where + "/forms";
  check_keys(j, where, {"form_id", "url_path", "submit_name", "fields"});
  FormSpec form;
  form.form_id = get_string(j, "form_id", where);
  where = app_where + "/" + form.form_id;
  form.url_path = get_string(j, "url_path", where);
  form.submit_name = get_string(j, "submit_name", where);
  auto it = j.find("fields");
  if (it == j.end() || !it->is_array())
    schema_error(where, "\"fields\" must be an array");
  for (auto& f : *it)
    form.fields.push_back(field_from_json(f, where));
  return form;
}

ordered_json number_to_json(const Decimal& d) {
  if (auto i = d.to_int64())
    return *i;
  return d.to_double();
}

ordered_json field_to_json(const FieldSpec& f) {
  ordered_json j;
  j["entity_name"] = f.entity_name;
  j["data_type"] = to_string(f.data_type);
  j["required"] = f.required;
  if (f.max_width)
    j["max_width"] = *f.max_width;
  if (f.min_value)
    j["min_value"] = number_to_json(*f.min_value);
  if (f.max_value)
    j["max_value"] = number_to_json(*f.max_value);
  if (f.options)
    j["options"] = *f.options;
  if (f.label)
    j["label"] = *f.label;
  return j;
}

ordered_json form_to_json(const FormSpec& form) {
  ordered_json j;
  j["form_id"] = form.form_id;
  j["url_path"] = form.url_path;
  j["submit_name"] = form.submit_name;
  j["fields"] = ordered_json::array();
  for (auto& f : form.fields)
    j["fields"].push_back(field_to_json(f));
  return j;
}

} // namespace

AppSpec parse_app_spec(std::string_view source) {
  json doc = parse_strict(source);
  check_keys(doc, "app", {"app_id", "forms"});
  AppSpec app;
  app.app_id = get_string(doc, "app_id", "app");
  auto it = doc.find("forms");
  if (it == doc.end() || !it->is_array())
    schema_error(app.app_id, "\"forms\" must be an array");
  for (auto& f : *it)
    app.forms.push_back(form_from_json(f, app.app_id));
  return app;
}

std::string serialize_app_spec(const AppSpec& app) {
  ordered_json j;
  j["app_id"] = app.app_id;
  j["forms"] = ordered_json::array();
  for (auto& form : app.forms)
    j["forms"].push_back(form_to_json(form));
  return j.dump(2) + "\n";
}

std::string form_descriptor(const FormSpec& form) { return form_to_json(form).dump(2); }

FormSpec parse_form_descriptor(std::string_view source) {
  return form_from_json(parse_strict(source), "descriptor");
}

// ---------------------------------------------------------------------------
// Invariants

std::vector<MetadataDiagnostic> validate_app_spec(const AppSpec& app) {
  std::vector<MetadataDiagnostic> out;
  auto error = [&](std::string location, std::string message) {
    out.push_back({Severity::error, std::move(location), std::move(message)});
  };

  const std::string app_loc = app.app_id.empty() ? "app" : app.app_id;
  if (!is_identifier(app.app_id))
    error(app_loc, "app_id \"" + app.app_id + "\" is not an identifier");

  std::set<std::string> form_ids, urls;
  for (const auto& form : app.forms) {
    const std::string form_loc = app_loc + "/" + form.form_id;
    if (!is_identifier(form.form_id))
      error(form_loc, "form_id \"" + form.form_id + "\" is not an identifier");
    if (!form_ids.insert(form.form_id).second)
      error(form_loc, "duplicate form_id \"" + form.form_id + "\"");
    if (form.url_path.empty() || form.url_path.front() != '/')
      error(form_loc, "url_path \"" + form.url_path + "\" must begin with \"/\"");
    if (!urls.insert(form.url_path).second)
      error(form_loc, "duplicate url_path \"" + form.url_path + "\"");
    if (!is_identifier(form.submit_name))
      error(form_loc, "submit_name \"" + form.submit_name + "\" is not an identifier");
    if (form.find_field(form.submit_name))
      error(form_loc, "submit_name \"" + form.submit_name + "\" collides with a field");

    std::set<std::string> names;
    for (const auto& f : form.fields) {
      const std::string loc = form_loc + "/" + f.entity_name;
      if (!is_identifier(f.entity_name))
        error(loc, "entity_name \"" + f.entity_name + "\" is not an identifier");
      if (!names.insert(f.entity_name).second)
        error(loc, "duplicate field entity_name \"" + f.entity_name + "\"");
      if (f.max_width && *f.max_width < 1)
        error(loc, "max_width must be >= 1");
      if ((f.min_value || f.max_value) && !f.is_number())
        error(loc, "min_value/max_value require an integer or numeric field");
      if (f.min_value && f.max_value && *f.min_value > *f.max_value)
        error(loc, "min_value > max_value");
      if (f.data_type == DataType::select_list) {
        if (!f.options || f.options->empty()) {
          error(loc, "select_list requires at least one option");
        } else {
          std::set<std::string> seen;
          for (const auto& o : *f.options) {
            if (o.empty())
              error(loc, "options must be non-empty strings");
            else if (!seen.insert(o).second)
              error(loc, "duplicate option \"" + o + "\"");
          }
        }
      } else if (f.options) {
        error(loc, "options are only allowed on select_list fields");
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Field validation

ValidationOutcome field_accepts(const FieldSpec& field, const std::optional<std::string>& raw) {
  ValidationOutcome out;
  auto fail = [&](FailureCode code) { out.failures.push_back({field.entity_name, code}); };

  if (!raw || raw->empty()) {
    if (field.required)
      fail(FailureCode::missing_required);
    out.accepted = out.failures.empty();
    return out;
  }
  const std::string& value = *raw;

  std::optional<Decimal> number;
  if (field.data_type == DataType::integer) {
    number = Decimal::parse_integer(value);
    if (!number)
      fail(FailureCode::not_integer);
  } else if (field.data_type == DataType::numeric) {
    number = Decimal::parse_numeric(value);
    if (!number)
      fail(FailureCode::not_numeric);
  }
  if (number) {
    if (field.min_value && *number < *field.min_value)
      fail(FailureCode::below_min);
    if (field.max_value && *number > *field.max_value)
      fail(FailureCode::above_max);
  }
  if (field.max_width && utf8_length(value) > static_cast<std::size_t>(*field.max_width))
    fail(FailureCode::too_wide);
  if (field.data_type == DataType::select_list) {
    const auto& options = field.options.value_or(std::vector<std::string>{});
    if (std::find(options.begin(), options.end(), value) == options.end())
      fail(FailureCode::not_an_option);
  }
  if (field.data_type == DataType::checkbox && value != "on")
    fail(FailureCode::bad_checkbox);

  out.accepted = out.failures.empty();
  return out;
}

ValidationOutcome form_accepts(const FormSpec& form, const std::map<std::string, std::string>& values) {
  ValidationOutcome out;
  for (const auto& f : form.fields) {
    auto it = values.find(f.entity_name);
    auto one = field_accepts(f, it == values.end() ? std::nullopt : std::optional<std::string>(it->second));
    out.failures.insert(out.failures.end(), one.failures.begin(), one.failures.end());
  }
  out.accepted = out.failures.empty();
  return out;
}

// ---------------------------------------------------------------------------

Locator Locator::parse(std::string_view text) {
  constexpr std::string_view prefix = "name=";
  if (text.substr(0, prefix.size()) != prefix)
    throw Error(ErrorCode::locator,
                "unsupported locator \"" + std::string(text) + "\" (only name=<element> is supported)");
  auto name = text.substr(prefix.size());
  if (!is_identifier(name))
    throw Error(ErrorCode::locator, "malformed locator \"" + std::string(text) + "\"");
  return Locator(std::string(name));
}

Locator Locator::by_name(std::string name) {
  if (!is_identifier(name))
    throw Error(ErrorCode::locator, "malformed element name \"" + name + "\"");
  return Locator(std::move(name));
}

} // namespace metatest
