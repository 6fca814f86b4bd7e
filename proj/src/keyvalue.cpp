#include "afflab/keyvalue.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "afflab/error.hpp"

namespace afflab {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::optional<std::string> KeyValueSection::get(std::string_view key) const {
  for (auto it = entries.rbegin(); it != entries.rend(); ++it)
    if (it->first == key) return it->second;
  return std::nullopt;
}

void KeyValueSection::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries.emplace_back(key, value);
}

KeyValueSection* KeyValueFile::find(std::string_view name) {
  for (auto& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

const KeyValueSection* KeyValueFile::find(std::string_view name) const {
  for (const auto& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

KeyValueSection& KeyValueFile::section(std::string_view name) {
  if (auto* s = find(name)) return *s;
  sections.push_back({std::string(name), {}, {}});
  return sections.back();
}

KeyValueFile parse_key_value(std::istream& in) {
  KeyValueFile file;
  file.sections.push_back({"", "", {}});
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw Error(ErrorCode::kInvalidArgument, "line " + std::to_string(line_no) + ": unterminated section header");
      const std::string inner = trim(std::string_view(line).substr(1, line.size() - 2));
      const auto sp = inner.find_first_of(" \t");
      KeyValueSection s;
      s.name = inner.substr(0, sp);
      if (sp != std::string::npos) s.arg = trim(std::string_view(inner).substr(sp));
      file.sections.push_back(std::move(s));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::kInvalidArgument, "line " + std::to_string(line_no) + ": expected key = value");
    file.sections.back().entries.emplace_back(trim(std::string_view(line).substr(0, eq)),
                                              trim(std::string_view(line).substr(eq + 1)));
  }
  return file;
}

KeyValueFile load_key_value(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return parse_key_value(in);
}

void write_key_value(std::ostream& out, const KeyValueFile& file) {
  bool first = true;
  for (const auto& s : file.sections) {
    if (s.name.empty() && s.entries.empty()) continue;
    if (!first) out << "\n";
    first = false;
    if (!s.name.empty()) out << "[" << s.name << (s.arg.empty() ? "" : " " + s.arg) << "]\n";
    for (const auto& [k, v] : s.entries) out << k << " = " << v << "\n";
  }
}

double parse_double(std::string_view text, std::string_view what) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw Error(ErrorCode::kInvalidArgument, "bad number for " + std::string(what) + ": '" + t + "'");
  return v;
}

long long parse_int(std::string_view text, std::string_view what) {
  const std::string t = trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw Error(ErrorCode::kInvalidArgument, "bad integer for " + std::string(what) + ": '" + t + "'");
  return v;
}

std::vector<double> parse_doubles(std::string_view text, std::string_view what) {
  std::string s(text);
  for (char& c : s)
    if (c == ',') c = ' ';
  std::istringstream is(s);
  std::vector<double> out;
  std::string tok;
  while (is >> tok) out.push_back(parse_double(tok, what));
  return out;
}

}  // namespace afflab
