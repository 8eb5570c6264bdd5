#pragma once

// Flat key/value configuration. Files use INI-style sections:
//
//   [train]
//   learning_rate = 2e-4   # comment
//
// which become the key "train.learning_rate". Every key must be one of the
// registered defaults, so typos fail loudly.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace attnhtr {

class Config {
 public:
  // All registered keys with their default values.
  static Config defaults();
  static Config parse(const std::string& text, const std::string& origin = "<string>");
  // Throws IoError, InvalidConfig.
  static Config load(const std::filesystem::path& path);

  // Accepts a full key or an unambiguous final component ("epochs" for
  // "train.epochs"). Throws InvalidConfig for unknown keys.
  void set(const std::string& key, const std::string& value);
  // Applies "--key value" / "--key=value" pairs; returns what was not an
  // override (positional arguments).
  std::vector<std::string> apply_overrides(const std::vector<std::string>& args);
  void merge(const Config& other);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  // lo,hi
  std::pair<double, double> get_range(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  std::string to_text() const;

  // train.seed when set, else ATTNHTR_SEED, else 0.
  std::uint64_t seed() const;

 private:
  std::string resolve(const std::string& key) const;
  std::map<std::string, std::string> values_;
};

}  // namespace attnhtr
