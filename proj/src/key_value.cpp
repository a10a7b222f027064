#include "msd/key_value.hpp"

#include "msd/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace msd {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

double parse_double(const std::string& text) {
  const std::string t = trim(text);
  double value = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (!t.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || t.empty() || !std::isfinite(value)) {
    throw InvalidInputError("not a real number: '" + t + "'");
  }
  return value;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::string normalized = text;
  for (char& c : normalized) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(normalized);
  std::vector<double> out;
  std::string token;
  while (in >> token) out.push_back(parse_double(token));
  return out;
}

KeyValueFile KeyValueFile::parse(const std::string& text) {
  KeyValueFile file;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (const auto hash = line.find_first_of("#;"); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", line_no, line.size());
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("expected 'key = value'", line_no, raw.find_first_not_of(" \t") + 1);
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("empty key", line_no, 1);
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (!section.empty()) key = section + "." + key;
    if (file.entries_.count(key)) {
      throw ParseError("duplicate key '" + key + "'", line_no, 1);
    }
    file.entries_[key] = Entry{value, line_no};
  }
  return file;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open config file '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::optional<std::string> KeyValueFile::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second.value;
}

std::string KeyValueFile::require(const std::string& key) const {
  auto v = get(key);
  if (!v) throw InvalidInputError("missing required key '" + key + "'");
  return *v;
}

std::optional<double> KeyValueFile::get_double(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  try {
    return parse_double(it->second.value);
  } catch (const InvalidInputError& e) {
    throw ParseError("key '" + key + "': " + e.what(), it->second.line, 1);
  }
}

double KeyValueFile::require_double(const std::string& key) const {
  auto v = get_double(key);
  if (!v) throw InvalidInputError("missing required key '" + key + "'");
  return *v;
}

std::optional<long long> KeyValueFile::get_int(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  const std::string& s = it->second.value;
  long long value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError("key '" + key + "': not an integer: '" + s + "'", it->second.line, 1);
  }
  return value;
}

std::vector<double> KeyValueFile::require_doubles(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw InvalidInputError("missing required key '" + key + "'");
  try {
    return parse_double_list(it->second.value);
  } catch (const InvalidInputError& e) {
    throw ParseError("key '" + key + "': " + e.what(), it->second.line, 1);
  }
}

void KeyValueFile::set(const std::string& key, std::string value) {
  entries_[key] = Entry{std::move(value), 0};
}

}  // namespace msd
