#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vsr/common.hpp"
#include "vsr/kv_cache.hpp"
#include "vsr/mask.hpp"

namespace vsr {

// Parsed flat key=value file. Parse rules, applied byte-wise:
//   - '#' starts a comment; the rest of the line is dropped.
//   - Blank lines (after trimming ASCII space/tab) are skipped.
//   - "[name]" opens a section; keys below it are reported as "name.key".
//   - Every other line must contain '='. Key and value are trimmed; the
//     value is otherwise taken verbatim (no quoting, no escapes).
//   - Duplicate keys are an error, not an override.
class ConfigMap {
 public:
  void insert(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return index_.count(key) > 0; }
  const std::string& raw(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& dflt) const;
  long long get_int(const std::string& key, long long dflt) const;
  std::size_t get_size(const std::string& key, std::size_t dflt) const;
  double get_double(const std::string& key, double dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t> index_;
};

ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::string& path);

// Parameter surface for the benchmark and demo commands. Field defaults are
// the CSV-reproducible baseline; a config file or CLI flags override them.
struct BenchConfig {
  // [grid] token grid for the attention benchmarks
  std::size_t frames = 4;
  std::size_t rows = 32;
  std::size_t cols = 64;

  // [attention]
  std::size_t heads = 1;
  std::size_t d_head = 32;
  std::size_t topk = 8;
  double target_density = 0.0;  // > 0 derives topk from the key-block count

  // [stream] demo engine knobs
  std::size_t window = 4;
  EvictStrategy strategy = EvictStrategy::sliding_window;
  std::string locality = "off";  // off | preserved | truncated
  int extent = 5;
  std::size_t latent_rows = 8;
  std::size_t latent_cols = 8;

  // [demo] decoder stage widths for the end-to-end demo
  std::size_t decoder_c0 = 16;
  std::size_t decoder_c1 = 12;
  std::size_t decoder_c2 = 8;

  // [bench]
  std::uint64_t seed = 1234;
  std::size_t reps = 5;
  std::size_t warmup = 1;
  std::size_t threads = 1;

  std::size_t tokens() const { return frames * rows * cols; }

  static const std::vector<std::string>& known_keys();
  // Rejects keys outside known_keys() before reading any value.
  static BenchConfig from_config(const ConfigMap& cm);
  void validate() const;
};

}  // namespace vsr
