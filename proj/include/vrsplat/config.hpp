// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "vrsplat/harness.hpp"

namespace vrsplat {

// Loads a benchmark config from an INI file with sections
// [scene], [rig], [ranges], [losses], [bank], [distill], [benchmark].
// Unknown sections or keys throw ConfigError naming the offender; missing
// keys keep their defaults. The full schema is documented in the README and
// mirrored by configs/default.ini.
BenchmarkConfig load_config(const std::string& path);

// Writes the config back out (round-trips bit-exactly through load_config).
void save_config(const std::string& path, const BenchmarkConfig& config);

}  // namespace vrsplat
