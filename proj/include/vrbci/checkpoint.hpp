#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vrbci/nn.hpp"
#include "vrbci/tensor.hpp"

namespace vrbci {

// Textual checkpoint format. First line is the engine version header, then
// one record per tensor: `name ndims d1..dn v1 v2 ...`. Values are written
// with shortest round-trip formatting, so save/load is bit-exact.
inline constexpr const char* kCheckpointHeader = "vrbci-ckpt 1";

namespace detail {

inline void append_double(std::string& out, double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, r.ptr);
}

inline double parse_double(const std::string& tok, const std::string& where) {
  double v = 0.0;
  auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (r.ec != std::errc{} || r.ptr != tok.data() + tok.size()) {
    throw std::runtime_error("checkpoint: bad numeric value '" + tok + "' in " +
                             where);
  }
  return v;
}

}  // namespace detail

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline void save_named_tensors(const std::string& path,
                               const NamedTensors& tensors) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  f << kCheckpointHeader << "\n";
  std::string line;
  for (const auto& [name, t] : tensors) {
    line.clear();
    line += name;
    line += ' ';
    line += std::to_string(t.shape.size());
    for (std::size_t d : t.shape) {
      line += ' ';
      line += std::to_string(d);
    }
    for (double v : t.values) {
      line += ' ';
      detail::append_double(line, v);
    }
    f << line << "\n";
  }
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline NamedTensors load_named_tensors(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string header;
  std::getline(f, header);
  if (header != kCheckpointHeader) {
    throw std::runtime_error("checkpoint: unsupported header '" + header +
                             "' in " + path);
  }
  NamedTensors out;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string name, tok;
    std::size_t ndims = 0;
    if (!(is >> name >> ndims)) {
      throw std::runtime_error("checkpoint: malformed record at line " +
                               std::to_string(lineno));
    }
    std::vector<std::size_t> shape(ndims);
    for (std::size_t i = 0; i < ndims; ++i) {
      if (!(is >> shape[i])) {
        throw std::runtime_error("checkpoint: truncated shape at line " +
                                 std::to_string(lineno));
      }
    }
    std::size_t count = Tensor::element_count(shape);
    std::vector<double> values;
    values.reserve(count);
    while (is >> tok) {
      values.push_back(detail::parse_double(tok, name));
    }
    if (values.size() != count) {
      throw std::runtime_error(
          "checkpoint: tensor " + name + " expects " + std::to_string(count) +
          " values, found " + std::to_string(values.size()));
    }
    out.emplace_back(name, Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

// Full network state: parameters, Adam moments, and the step counter (stored
// as a one-element tensor so the format stays one-record-per-tensor).
inline void save_network(const std::string& path, const Network& net) {
  NamedTensors records;
  std::vector<std::string> names = net.param_names();
  const NetworkParams& p = net.params();
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    records.emplace_back(names[i], p.tensors[i]);
  }
  for (std::size_t i = 0; i < p.adam.m.size(); ++i) {
    records.emplace_back(names[i] + ".m", p.adam.m[i]);
    records.emplace_back(names[i] + ".v", p.adam.v[i]);
  }
  records.emplace_back(
      "adam.step", Tensor({1}, {static_cast<double>(p.adam.step)}));
  save_named_tensors(path, records);
}

inline void load_network(const std::string& path, Network& net) {
  NamedTensors records = load_named_tensors(path);
  std::vector<std::string> names = net.param_names();
  NetworkParams& p = net.params();
  auto find = [&](const std::string& name) -> const Tensor& {
    for (const auto& [n, t] : records) {
      if (n == name) return t;
    }
    throw std::runtime_error("checkpoint: missing tensor " + name + " in " +
                             path);
  };
  auto assign = [&](Tensor& dst, const std::string& name) {
    const Tensor& src = find(name);
    if (src.shape != dst.shape) {
      throw std::runtime_error("checkpoint: tensor " + name + " has shape " +
                               shape_string(src.shape) + ", expected " +
                               shape_string(dst.shape));
    }
    dst = src;
  };
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    assign(p.tensors[i], names[i]);
    assign(p.adam.m[i], names[i] + ".m");
    assign(p.adam.v[i], names[i] + ".v");
  }
  p.adam.step = static_cast<long long>(find("adam.step").values[0]);
}

}  // namespace vrbci
