#pragma once

#include "nssm/errors.hpp"

#include <string>

namespace nssm::cli {

/// Configuration problem tied to a key of the JSON config.
class ConfigError : public InvalidArgument {
public:
    ConfigError(const std::string& key, const std::string& what)
        : InvalidArgument("config key '" + key + "': " + what), key_(key) {}
    [[nodiscard]] const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

inline constexpr const char* kVersion = "0.1.0";

/// Entry point for the `nssm` executable. Returns the process exit status:
/// 0 success, 1 unexpected failure, 2 configuration or input error,
/// 3 numerical failure. Errors are reported as JSON on stderr.
int run(int argc, char** argv);

}  // namespace nssm::cli
