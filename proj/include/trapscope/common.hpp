#pragma once

#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace trapscope {

/// Selects between the OpenMP kernel and the serial reference path.
/// Both produce bit-identical results; the serial path exists for testing
/// and benchmarking.
enum class Exec { serial, parallel };

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

namespace constants {
inline constexpr double elementary_charge = 1.602176634e-19;  // C
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg
}  // namespace constants

// Base of every error thrown by the library. The CLI maps these to exit code 2
// (configuration/usage) or reports them in the failure JSON.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class MeasurementError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error("config key '" + key + "': " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Number of worker threads used by OpenMP kernels (>= 1).
int thread_count();
void set_thread_count(int n);

}  // namespace trapscope
