#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace afflab {

/// Flat key-value text with optional "[section args]" headers; '#' starts
/// a comment. Keys before the first header land in a section named "".
struct KeyValueSection {
  std::string name;  // first word of the header
  std::string arg;   // rest of the header (e.g. a shape id)
  std::vector<std::pair<std::string, std::string>> entries;

  std::optional<std::string> get(std::string_view key) const;
  void set(const std::string& key, const std::string& value);
};

struct KeyValueFile {
  std::vector<KeyValueSection> sections;

  KeyValueSection* find(std::string_view name);
  const KeyValueSection* find(std::string_view name) const;
  KeyValueSection& section(std::string_view name);  // created when missing
};

KeyValueFile parse_key_value(std::istream& in);
KeyValueFile load_key_value(const std::filesystem::path& path);
void write_key_value(std::ostream& out, const KeyValueFile& file);

double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);
std::vector<double> parse_doubles(std::string_view text, std::string_view what);

}  // namespace afflab
