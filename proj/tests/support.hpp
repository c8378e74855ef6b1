#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <unistd.h>

#include "derivgen/numeric/tensor.hpp"

namespace testing {

// Exponential recursion straight from the definition; only for short strings.
inline size_t naive_levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.empty()) return b.size();
  if (b.empty()) return a.size();
  const size_t cost = a.back() == b.back() ? 0 : 1;
  auto a1 = a.substr(0, a.size() - 1);
  auto b1 = b.substr(0, b.size() - 1);
  return std::min({naive_levenshtein(a1, b) + 1, naive_levenshtein(a, b1) + 1,
                   naive_levenshtein(a1, b1) + cost});
}

inline size_t naive_levenshtein(std::string_view a, std::string_view b) {
  std::u32string ua(a.begin(), a.end()), ub(b.begin(), b.end());
  return naive_levenshtein(ua, ub);
}

// The same recursion over prefix lengths, memoized so length-6 pairs stay cheap.
inline size_t memo_levenshtein(std::string_view a, std::string_view b) {
  const size_t npos = static_cast<size_t>(-1);
  std::vector<size_t> memo((a.size() + 1) * (b.size() + 1), npos);
  std::function<size_t(size_t, size_t)> d = [&](size_t i, size_t j) -> size_t {
    if (i == 0) return j;
    if (j == 0) return i;
    size_t& slot = memo[i * (b.size() + 1) + j];
    if (slot != npos) return slot;
    const size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
    return slot = std::min({d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + cost});
  };
  return d(a.size(), b.size());
}

// Every string over `alphabet` with length 0..max_len, shortest first.
inline std::vector<std::string> all_strings(std::string_view alphabet, size_t max_len) {
  std::vector<std::string> out{""};
  size_t begin = 0;
  for (size_t len = 1; len <= max_len; ++len) {
    const size_t end = out.size();
    for (size_t i = begin; i < end; ++i) {
      for (char c : alphabet) out.push_back(out[i] + c);
    }
    begin = end;
  }
  return out;
}

// The 1e-6 floor keeps finite-difference noise on near-zero gradients from
// dominating the ratio.
inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

// Largest relative error between the gradient stored in `param` and central
// differences of `loss` (step h) over every element of `param`.
inline double max_gradient_error(derivgen::numeric::Tensor& param,
                                 const std::function<double()>& loss, double h = 1e-4) {
  double worst = 0.0;
  auto values = param.values();
  auto grad = param.grad();
  for (size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = loss();
    values[i] = saved - h;
    const double down = loss();
    values[i] = saved;
    const double numeric = (up - down) / (2 * h);
    worst = std::max(worst, relative_error(grad[i], numeric));
  }
  return worst;
}

class TempDir {
 public:
  explicit TempDir(std::string_view tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("derivgen_" + std::string(tag) + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(std::string_view name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace testing
