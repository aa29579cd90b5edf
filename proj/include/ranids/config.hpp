#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ranids {

// `key = value` text with `#` comments. Later keys override earlier ones.
class KeyValueConfig {
public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Keys that begin with `prefix`, in sorted order.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;
  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }
  const std::string& origin() const noexcept { return origin_; }

  // Throws if a key was never read by a getter (catches typos in configs).
  void reject_unused() const;

private:
  std::map<std::string, std::string> entries_;
  std::string origin_ = "<string>";
  mutable std::set<std::string> used_;
};

} // namespace ranids
