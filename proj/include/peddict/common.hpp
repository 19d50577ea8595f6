#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace peddict {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }

double distance(Point2 a, Point2 b);
double squared_distance(Point2 a, Point2 b);

/// Base class for everything the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or inconsistent input data (malformed files, shape mismatches).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Artifact file whose magic/version line or structure is wrong.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// Invalid configuration or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Text helpers shared by every reader/writer.

/// Shortest text form that round-trips: 17 significant digits.
std::string format_double(double v);
double parse_double(std::string_view s);
std::int64_t parse_int(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);
/// The pieces point into the argument, so it must outlive them.
std::vector<std::string_view> split(std::string&& s, char sep) = delete;
std::string_view trim(std::string_view s);
std::string join_doubles(const std::vector<double>& v, char sep);

// Logging. Level comes from PEDDICT_LOG (error|info|debug), default info.
enum class LogLevel { error = 0, info = 1, debug = 2 };
LogLevel log_level();
void set_log_level(LogLevel level);
void log(LogLevel level, const std::string& msg);
inline void log_info(const std::string& msg) { log(LogLevel::info, msg); }
inline void log_debug(const std::string& msg) { log(LogLevel::debug, msg); }
inline void log_warn(const std::string& msg) { log(LogLevel::error, "warning: " + msg); }

/// Mixes a base seed with stream identifiers (splitmix64), so independent
/// stages and workers draw from unrelated generators.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> stream);

/// Worker cap used by every parallel stage. 0 means hardware concurrency.
void set_max_threads(unsigned n);
unsigned max_threads();

/// Calls fn(i) for i in [0, count). Each index is handled by exactly one
/// worker, so results written per index do not depend on the thread count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace peddict
