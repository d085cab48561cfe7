#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "stackelberg/mlp.hpp"

namespace stackelberg {

// Text format, one tensor per block:
//   named-tensors 1
//   tensor <name> <rank> <dim_0> ... <dim_{rank-1}>
//   <row-major values, %.17g, whitespace separated>
// Names contain no whitespace. Values round-trip exactly.
void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(std::istream& in);
void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::string& path);

// Lookup by name; throws ConfigError when absent.
const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace stackelberg
