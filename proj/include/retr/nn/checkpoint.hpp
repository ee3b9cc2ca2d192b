// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "retr/nn/param_store.hpp"

namespace retr::nn {

/// Checkpoint container (documented in the README):
///   magic "RETRCKPT" | u32 version=1 | config string | u64 record count |
///   records of (name string, u32 rank, u32 dims[rank], f64 data...)
/// Records appear in store insertion order; all integers and floats are
/// little-endian. `config` carries the resolved model configuration so a
/// checkpoint is self-describing.
void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& config);

/// Reads just the embedded config string.
std::string read_checkpoint_config(const std::string& path);

/// Loads parameter values into an existing store. Every record must match a
/// stored parameter by name and shape, and every parameter must be present.
void load_checkpoint(const std::string& path, ParamStore& store);

}  // namespace retr::nn
