#pragma once

// Text archive for MlpParams.
//
//   irsnoma-mlp 1
//   branches <count> <width>...
//   stages <count>
//   stage <index> <activation> <out_width> norm <0|1> [<eps> <momentum>]
//   tensor <name> <rows> <cols>
//   <rows*cols values, column-major>
//   ...
//
// Every floating-point value is written in hexadecimal notation (%a), so a
// save/load round trip is bit-exact. Tensors of a stage appear in order:
// w<b> and b<b> per branch, then scale, shift, mean, var when normalized.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "irsnoma/nn/mlp.hpp"

namespace irsnoma::nn {

class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_hex(const std::string& tok) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw ArchiveError("archive: bad number '" + tok + "'");
  return v;
}

template <class Dense>
void write_tensor(std::ostream& os, const std::string& name, const Dense& t) {
  os << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
  for (Index i = 0; i < t.size(); ++i) os << (i ? " " : "") << hex(t.data()[i]);
  os << '\n';
}

inline void expect(std::istream& is, const std::string& word) {
  std::string tok;
  if (!(is >> tok) || tok != word)
    throw ArchiveError("archive: expected '" + word + "', found '" + tok + "'");
}

template <class T>
T read_value(std::istream& is, const char* what) {
  T v{};
  if (!(is >> v)) throw ArchiveError(std::string("archive: could not read ") + what);
  return v;
}

inline Matrix read_tensor(std::istream& is, const std::string& name) {
  expect(is, "tensor");
  expect(is, name);
  const auto rows = read_value<Index>(is, "rows");
  const auto cols = read_value<Index>(is, "cols");
  if (rows < 0 || cols < 0) throw ArchiveError("archive: negative tensor shape");
  Matrix m(rows, cols);
  std::string tok;
  for (Index i = 0; i < m.size(); ++i) {
    if (!(is >> tok)) throw ArchiveError("archive: truncated tensor " + name);
    m.data()[i] = parse_hex(tok);
  }
  return m;
}

inline Vector read_vector(std::istream& is, const std::string& name) {
  Matrix m = read_tensor(is, name);
  if (m.cols() != 1) throw ArchiveError("archive: tensor " + name + " must be a column");
  return m.col(0);
}

}  // namespace detail

inline void save(std::ostream& os, const MlpParams& p) {
  os << "irsnoma-mlp 1\n";
  os << "branches " << p.branch_widths.size();
  for (Index w : p.branch_widths) os << ' ' << w;
  os << "\nstages " << p.stages.size() << '\n';
  for (std::size_t s = 0; s < p.stages.size(); ++s) {
    const Stage& st = p.stages[s];
    os << "stage " << s << ' ' << to_string(st.activation) << ' ' << st.out_width() << " norm "
       << (st.norm ? 1 : 0);
    if (st.norm) os << ' ' << detail::hex(st.norm->eps) << ' ' << detail::hex(st.norm->momentum);
    os << '\n';
    for (std::size_t b = 0; b < st.weights.size(); ++b) {
      detail::write_tensor(os, "w" + std::to_string(b), st.weights[b]);
      detail::write_tensor(os, "b" + std::to_string(b), st.biases[b]);
    }
    if (st.norm) {
      detail::write_tensor(os, "scale", st.norm->scale);
      detail::write_tensor(os, "shift", st.norm->shift);
      detail::write_tensor(os, "mean", st.norm->running_mean);
      detail::write_tensor(os, "var", st.norm->running_var);
    }
  }
}

inline MlpParams load(std::istream& is) {
  detail::expect(is, "irsnoma-mlp");
  if (detail::read_value<int>(is, "version") != 1) throw ArchiveError("archive: unsupported version");
  MlpParams p;
  detail::expect(is, "branches");
  const auto n_branches = detail::read_value<std::size_t>(is, "branch count");
  for (std::size_t b = 0; b < n_branches; ++b)
    p.branch_widths.push_back(detail::read_value<Index>(is, "branch width"));
  detail::expect(is, "stages");
  const auto n_stages = detail::read_value<std::size_t>(is, "stage count");
  for (std::size_t s = 0; s < n_stages; ++s) {
    detail::expect(is, "stage");
    if (detail::read_value<std::size_t>(is, "stage index") != s)
      throw ArchiveError("archive: stages out of order");
    Stage st;
    st.activation = activation_from_string(detail::read_value<std::string>(is, "activation"));
    detail::read_value<Index>(is, "width");
    detail::expect(is, "norm");
    const int has_norm = detail::read_value<int>(is, "norm flag");
    BatchNorm bn;
    if (has_norm) {
      bn.eps = detail::parse_hex(detail::read_value<std::string>(is, "eps"));
      bn.momentum = detail::parse_hex(detail::read_value<std::string>(is, "momentum"));
    }
    const std::size_t branches = s == 0 ? n_branches : 1;
    for (std::size_t b = 0; b < branches; ++b) {
      st.weights.push_back(detail::read_tensor(is, "w" + std::to_string(b)));
      st.biases.push_back(detail::read_vector(is, "b" + std::to_string(b)));
    }
    if (has_norm) {
      bn.scale = detail::read_vector(is, "scale");
      bn.shift = detail::read_vector(is, "shift");
      bn.running_mean = detail::read_vector(is, "mean");
      bn.running_var = detail::read_vector(is, "var");
      st.norm = std::move(bn);
    }
    p.stages.push_back(std::move(st));
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ArchiveError(std::string("archive: ") + e.what());
  }
  return p;
}

inline void save_file(const std::string& path, const MlpParams& p) {
  std::ofstream os(path);
  if (!os) throw ArchiveError("archive: cannot open " + path + " for writing");
  save(os, p);
  if (!os) throw ArchiveError("archive: write failed for " + path);
}

inline MlpParams load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ArchiveError("archive: cannot open " + path);
  return load(is);
}

}  // namespace irsnoma::nn
