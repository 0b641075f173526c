// Single-file binary checkpoints: versioned magic, key-value metadata, named
// parameter blocks with shapes, raw little-endian doubles, and the student
// table for per-student parameters.

#pragma once

#include <memory>
#include <string>

#include "ktrace/model.hpp"

namespace ktrace {

void save_checkpoint(const std::string& path, const Model& model);

// relations: required when the stored model is rkt, ignored otherwise.
std::unique_ptr<Model> load_checkpoint(const std::string& path,
                                       const RelationMatrix* relations);

// Reads only the header, for deciding whether a relation matrix is needed.
ModelKind checkpoint_kind(const std::string& path);

}  // namespace ktrace
