#pragma once

#include <string>

#include "qmvos/param_store.hpp"

namespace qmvos {

// QMVW1 weight container. Layout, all integers and floats little-endian:
//   bytes "QMVW1"
//   repeated until end of file:
//     u64 name length | name bytes | u64 rank | u64 extents[rank] |
//     f64 values[product(extents)]
// Records are written in name order; loading preserves values bit-exactly.
void save_weights(const ParamStore& params, const std::string& path);
ParamStore load_weights(const std::string& path);

}  // namespace qmvos
