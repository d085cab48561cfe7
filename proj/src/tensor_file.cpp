#include "stackelberg/tensor_file.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>

#include "stackelberg/error.hpp"

namespace stackelberg {

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out << "named-tensors 1\n";
  char buf[40];
  for (const auto& t : tensors) {
    std::size_t n = 1;
    out << "tensor " << t.name << ' ' << t.shape.size();
    for (std::size_t s : t.shape) {
      out << ' ' << s;
      n *= s;
    }
    out << '\n';
    if (n != t.values.size()) throw DimensionError("tensor file: shape of " + t.name + " does not match its values");
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", t.values[i]);
      out << buf << (i + 1 == t.values.size() ? "\n" : " ");
    }
  }
}

std::vector<NamedTensor> read_tensors(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "named-tensors" || version != 1) {
    throw ConfigError("tensor file: missing 'named-tensors 1' header");
  }
  std::vector<NamedTensor> out;
  std::string word;
  while (in >> word) {
    if (word != "tensor") throw ConfigError("tensor file: expected 'tensor', got '" + word + "'");
    NamedTensor t;
    std::size_t rank = 0;
    if (!(in >> t.name >> rank)) throw ConfigError("tensor file: malformed tensor header");
    std::size_t n = 1;
    t.shape.resize(rank);
    for (auto& s : t.shape) {
      if (!(in >> s)) throw ConfigError("tensor file: malformed shape of " + t.name);
      n *= s;
    }
    t.values.resize(n);
    for (auto& v : t.values) {
      std::string tok;
      if (!(in >> tok)) throw ConfigError("tensor file: truncated values of " + t.name);
      char* end = nullptr;
      v = std::strtod(tok.c_str(), &end);  // strtod keeps subnormals that stod rejects
      if (end != tok.c_str() + tok.size()) throw ConfigError("tensor file: bad number '" + tok + "' in " + t.name);
    }
    out.push_back(std::move(t));
  }
  return out;
}

void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("tensor file: cannot write " + path);
  write_tensors(out, tensors);
}

std::vector<NamedTensor> load_tensors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("tensor file: cannot read " + path);
  return read_tensors(in);
}

const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw ConfigError("tensor file: missing tensor " + name);
}

}  // namespace stackelberg
