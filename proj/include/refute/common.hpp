#pragma once
// Shared utilities: error type, deterministic RNG helpers, hashing,
// string helpers and JSON-lines I/O.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace refute {

using json = nlohmann::json;

// All recoverable failures in the library are reported with this type (or a
// subclass carrying structured context).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- random -----------------------------------------------------------------
// std distributions are implementation-defined; these are not, so seeded runs
// reproduce across standard libraries.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline std::size_t uniform_index(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

// Box-Muller, one draw per call.
double normal(Rng& rng, double mean = 0.0, double stddev = 1.0);

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

// --- hashing ----------------------------------------------------------------
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// --- strings ----------------------------------------------------------------
std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string collapse_whitespace(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);
// Lowercased alphanumeric word tokens; everything else separates.
std::vector<std::string> word_tokens(std::string_view text);

// --- files ------------------------------------------------------------------
std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Reads a JSON-lines file, invoking fn(line_number, parsed) for each
// non-blank line. Lines that fail to parse are reported to on_error.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const json&)>& fn,
                    const std::function<void(std::size_t, const std::string&)>& on_error);

// Appends whole lines to a JSON-lines file; each append is flushed before
// returning so an interrupted run never leaves a half-written record. A torn
// final line found at construction is removed.
class JsonlAppender {
 public:
  explicit JsonlAppender(const std::filesystem::path& path);
  void append(const json& record);

 private:
  std::filesystem::path path_;
};

}  // namespace refute
