#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "nargen/tape.hpp"
#include "nargen/tensor.hpp"

namespace nargen::testutil {

// Gradient-check convention: relative error with a small floor in the
// denominator so near-zero coordinates are judged on absolute error.
inline double rel_err(double a, double b, double floor_val = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor_val});
}

// Central finite difference of eval() with respect to coordinate i of t.
template <typename F>
double central_diff(Tensor<double>& t, Index i, double h, F&& eval) {
  const double orig = t[i];
  t[i] = orig + h;
  const double fp = eval();
  t[i] = orig - h;
  const double fm = eval();
  t[i] = orig;
  return (fp - fm) / (2.0 * h);
}

struct GradCheck {
  double max_rel = 0.0;
  std::string worst;
};

// Checks every coordinate of every named input tensor against central
// differences of `eval` (which must rebuild the computation from the tensors).
template <typename F>
GradCheck check_gradients(std::vector<std::pair<std::string, Tensor<double>*>> inputs,
                          const std::vector<const Tensor<double>*>& analytic, F&& eval,
                          double h = 1e-4) {
  GradCheck out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor<double>& t = *inputs[k].second;
    for (Index i = 0; i < t.size(); ++i) {
      const double fd = central_diff(t, i, h, eval);
      const double ad = (*analytic[k])[i];
      const double err = rel_err(ad, fd);
      if (err > out.max_rel) {
        out.max_rel = err;
        out.worst = inputs[k].first + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("nargen_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace nargen::testutil
