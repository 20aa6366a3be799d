#pragma once

#include <string>

#include "gridse/gnn.hpp"

namespace gridse {

/// Versioned text container: header (scalar type, n, graph variant,
/// hyperparameters), optional label bounds, every parameter tensor with name
/// and shape in the fixed for_each order, then normalization running means.
/// Layout is documented in docs/formats.md. Loading rejects version, name,
/// or shape mismatches.
template <class S>
void save_checkpoint(const GnnModel<S>& model, const std::string& path);

template <class S>
GnnModel<S> load_checkpoint(const std::string& path);

/// Peek at the scalar type ("float" or "double") recorded in a checkpoint.
std::string checkpoint_scalar(const std::string& path);

} // namespace gridse
