#include "vsr/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace vsr {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

}  // namespace

void ConfigMap::insert(const std::string& key, const std::string& value) {
  VSR_REQUIRE(index_.count(key) == 0, ConfigError,
              "config: duplicate key '" + key + "'");
  index_[key] = entries_.size();
  entries_.emplace_back(key, value);
}

const std::string& ConfigMap::raw(const std::string& key) const {
  const auto it = index_.find(key);
  VSR_REQUIRE(it != index_.end(), ConfigError, "config: missing key '" + key + "'");
  return entries_[it->second].second;
}

std::string ConfigMap::get_string(const std::string& key,
                                  const std::string& dflt) const {
  return has(key) ? raw(key) : dflt;
}

long long ConfigMap::get_int(const std::string& key, long long dflt) const {
  if (!has(key)) return dflt;
  const std::string& v = raw(key);
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' is not an integer: '" + v + "'");
  }
  VSR_REQUIRE(pos == v.size(), ConfigError,
              "config: trailing characters in integer key '" + key + "'");
  return out;
}

std::size_t ConfigMap::get_size(const std::string& key, std::size_t dflt) const {
  if (!has(key)) return dflt;
  const long long v = get_int(key, 0);
  VSR_REQUIRE(v >= 0, ConfigError, "config: key '" + key + "' must be >= 0");
  return static_cast<std::size_t>(v);
}

double ConfigMap::get_double(const std::string& key, double dflt) const {
  if (!has(key)) return dflt;
  const std::string& v = raw(key);
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' is not a number: '" + v + "'");
  }
  VSR_REQUIRE(pos == v.size(), ConfigError,
              "config: trailing characters in numeric key '" + key + "'");
  return out;
}

bool ConfigMap::get_bool(const std::string& key, bool dflt) const {
  if (!has(key)) return dflt;
  const std::string& v = raw(key);
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("config: key '" + key + "' is not a boolean: '" + v + "'");
}

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap cm;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      VSR_REQUIRE(line.back() == ']' && line.size() > 2, ConfigError,
                  "config: malformed section header at line " +
                      std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      VSR_REQUIRE(!section.empty(), ConfigError,
                  "config: empty section name at line " + std::to_string(lineno));
      continue;
    }
    const std::size_t eq = line.find('=');
    VSR_REQUIRE(eq != std::string::npos, ConfigError,
                "config: expected key=value at line " + std::to_string(lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    VSR_REQUIRE(!key.empty(), ConfigError,
                "config: empty key at line " + std::to_string(lineno));
    cm.insert(section.empty() ? key : section + "." + key, value);
  }
  return cm;
}

ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  VSR_REQUIRE(in.good(), IoError, "config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

const std::vector<std::string>& BenchConfig::known_keys() {
  static const std::vector<std::string> keys{
      "grid.frames",       "grid.rows",         "grid.cols",
      "attention.heads",   "attention.d_head",  "attention.topk",
      "attention.target_density",
      "stream.window",     "stream.evict",      "stream.locality",
      "stream.extent",     "stream.latent_rows", "stream.latent_cols",
      "demo.decoder_c0",   "demo.decoder_c1",   "demo.decoder_c2",
      "bench.seed",        "bench.reps",        "bench.warmup",
      "bench.threads",
  };
  return keys;
}

BenchConfig BenchConfig::from_config(const ConfigMap& cm) {
  const std::vector<std::string>& known = known_keys();
  for (const auto& [key, value] : cm.entries()) {
    (void)value;
    VSR_REQUIRE(std::find(known.begin(), known.end(), key) != known.end(),
                ConfigError, "config: unknown key '" + key + "'");
  }
  BenchConfig bc;
  bc.frames = cm.get_size("grid.frames", bc.frames);
  bc.rows = cm.get_size("grid.rows", bc.rows);
  bc.cols = cm.get_size("grid.cols", bc.cols);
  bc.heads = cm.get_size("attention.heads", bc.heads);
  bc.d_head = cm.get_size("attention.d_head", bc.d_head);
  bc.topk = cm.get_size("attention.topk", bc.topk);
  bc.target_density = cm.get_double("attention.target_density", bc.target_density);
  bc.window = cm.get_size("stream.window", bc.window);
  if (cm.has("stream.evict"))
    bc.strategy = evict_strategy_from_string(cm.raw("stream.evict"));
  bc.locality = cm.get_string("stream.locality", bc.locality);
  bc.extent = static_cast<int>(cm.get_int("stream.extent", bc.extent));
  bc.latent_rows = cm.get_size("stream.latent_rows", bc.latent_rows);
  bc.latent_cols = cm.get_size("stream.latent_cols", bc.latent_cols);
  bc.decoder_c0 = cm.get_size("demo.decoder_c0", bc.decoder_c0);
  bc.decoder_c1 = cm.get_size("demo.decoder_c1", bc.decoder_c1);
  bc.decoder_c2 = cm.get_size("demo.decoder_c2", bc.decoder_c2);
  bc.seed = static_cast<std::uint64_t>(cm.get_int("bench.seed",
                                                  static_cast<long long>(bc.seed)));
  bc.reps = cm.get_size("bench.reps", bc.reps);
  bc.warmup = cm.get_size("bench.warmup", bc.warmup);
  bc.threads = cm.get_size("bench.threads", bc.threads);
  bc.validate();
  return bc;
}

void BenchConfig::validate() const {
  VSR_REQUIRE(frames > 0 && rows > 0 && cols > 0, ConfigError,
              "bench: grid extents must be positive");
  VSR_REQUIRE(heads > 0 && d_head > 0, ConfigError,
              "bench: heads and d_head must be positive");
  VSR_REQUIRE(d_head % 2 == 0, ConfigError, "bench: d_head must be even");
  VSR_REQUIRE(topk > 0 || target_density > 0.0, ConfigError,
              "bench: need topk or target_density");
  VSR_REQUIRE(target_density <= 1.0, ConfigError,
              "bench: target_density must be <= 1");
  VSR_REQUIRE(locality == "off" || locality == "preserved" ||
                  locality == "truncated",
              ConfigError, "bench: locality must be off|preserved|truncated");
  VSR_REQUIRE(extent >= 1, ConfigError, "bench: extent must be >= 1");
  VSR_REQUIRE(window >= 1, ConfigError, "bench: window must be >= 1");
  VSR_REQUIRE(reps >= 1, ConfigError, "bench: reps must be >= 1");
  VSR_REQUIRE(threads >= 1, ConfigError, "bench: threads must be >= 1");
  VSR_REQUIRE(decoder_c0 >= 4 && decoder_c1 >= 4 && decoder_c2 >= 4, ConfigError,
              "bench: decoder stage widths must be >= 4");
}

}  // namespace vsr
