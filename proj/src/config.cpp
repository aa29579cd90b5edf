#include "ranids/config.hpp"

#include "ranids/error.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace ranids {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

} // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::Parse, origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) fail(ErrorKind::Parse, origin + ":" + std::to_string(line_no) + ": empty key");
    cfg.entries_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void KeyValueConfig::set(const std::string& key, const std::string& value) { entries_[key] = value; }

bool KeyValueConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  used_.insert(key);
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const auto out = std::stoll(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    fail(ErrorKind::Parse, origin_ + ": '" + key + "' expects an integer, got '" + *v + "'");
  }
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    if (!v->empty() && v->front() == '-') throw std::invalid_argument("negative");
    const auto out = std::stoull(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    fail(ErrorKind::Parse, origin_ + ": '" + key + "' expects an unsigned integer, got '" + *v + "'");
  }
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const auto out = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    fail(ErrorKind::Parse, origin_ + ": '" + key + "' expects a number, got '" + *v + "'");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::string s = *v;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  fail(ErrorKind::Parse, origin_ + ": '" + key + "' expects a boolean, got '" + *v + "'");
}

std::vector<std::string> KeyValueConfig::keys_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (auto it = entries_.lower_bound(prefix); it != entries_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    out.push_back(it->first);
  }
  return out;
}

void KeyValueConfig::reject_unused() const {
  for (const auto& [k, v] : entries_) {
    if (!used_.count(k)) fail(ErrorKind::Parse, origin_ + ": unknown key '" + k + "'");
  }
}

} // namespace ranids
