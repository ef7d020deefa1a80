#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace inconvad {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Ordered key=value store. Text form: one `key=value` per line, `#` or `;`
// comments, and optional `[section]` headers that prefix following keys
// with "section.".
class KeyValues {
 public:
  void set(const std::string& key, std::string value);
  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;

  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int_or(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool_or(const std::string& key, bool fallback) const;

  // Keys under "prefix." with the prefix removed.
  KeyValues section(const std::string& prefix) const;
  // Copies every entry of `other` over this one.
  void merge(const KeyValues& other);

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t> index_;
};

KeyValues parse_key_values(const std::string& text);
std::string format_key_values(const KeyValues& kv);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// Shared string helpers.
std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char delim);
std::vector<std::string> split_whitespace(const std::string& s);
std::string to_lower(std::string s);
double parse_double(const std::string& s, const std::string& what);
std::string format_double(double v);

}  // namespace inconvad
