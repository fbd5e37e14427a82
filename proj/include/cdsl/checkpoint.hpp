#ifndef CDSL_CHECKPOINT_HPP
#define CDSL_CHECKPOINT_HPP

#include <string>

#include "cdsl/graph.hpp"

namespace cdsl {

// Checkpoint layout: magic "CDSL", u32 LE version=1, u32 tensor count, u32
// reserved=0; then per tensor u16 name length + UTF-8 name, u8 ndim, ndim x
// u32 dims, row-major float32 LE payload.
void save_checkpoint(const nn::ParameterStore<float>& store, const std::string& path);

nn::ParameterStore<float> load_checkpoint(const std::string& path);

} // namespace cdsl

#endif
