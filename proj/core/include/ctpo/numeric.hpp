// Copyright 2026 The ctpo-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <random>
#include <span>
#include <thread>
#include <vector>

namespace ctpo {

// Neumaier compensated summation.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  void add(const CompensatedSum& other) noexcept {
    add(other.sum_);
    add(other.comp_);
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Component-wise compensated accumulator for parameter-shaped vectors.
class CompensatedVector {
 public:
  CompensatedVector() = default;
  explicit CompensatedVector(Eigen::Index size)
      : sum_(Eigen::VectorXd::Zero(size)), comp_(Eigen::VectorXd::Zero(size)) {}

  Eigen::Index size() const noexcept { return sum_.size(); }

  void add(Eigen::Index i, double x) noexcept {
    double& s = sum_[i];
    const double t = s + x;
    if (std::abs(s) >= std::abs(x)) {
      comp_[i] += (s - t) + x;
    } else {
      comp_[i] += (x - t) + s;
    }
    s = t;
  }
  void add(const CompensatedVector& other) noexcept {
    for (Eigen::Index i = 0; i < size(); ++i) {
      add(i, other.sum_[i]);
      add(i, other.comp_[i]);
    }
  }
  Eigen::VectorXd value() const { return sum_ + comp_; }

 private:
  Eigen::VectorXd sum_;
  Eigen::VectorXd comp_;
};

// Uniform double in [0, 1) from the top 53 bits of a 64-bit engine draw.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Independent engine for a (seed, stream) pair.
inline std::mt19937_64 derived_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), 0x9e3779b9u};
  return std::mt19937_64(seq);
}

// Stateless 64-bit mixer (splitmix64 finalizer). Used for seeded tables that
// must be pure functions of their key.
inline std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double hash_to_unit(std::uint64_t seed, std::uint64_t key) noexcept {
  return static_cast<double>(mix64(mix64(seed) ^ key) >> 11) * 0x1.0p-53;
}

// Runs fn(chunk) for chunk in [0, n_chunks). Chunks are claimed in a fixed
// interleaved pattern; callers reduce per-chunk results in index order, so
// the final value does not depend on `threads`.
template <class Fn>
void parallel_chunks(std::size_t n_chunks, int threads, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n_chunks, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) fn(c);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < n_chunks; c += workers) fn(c);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Stable log-softmax of `logits` written into `out`.
inline void log_softmax(std::span<const double> logits, std::span<double> out) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  const double lz = m + std::log(z);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lz;
}

inline std::uint64_t saturating_pow(std::uint64_t base, int exponent, std::uint64_t cap) {
  std::uint64_t r = 1;
  for (int i = 0; i < exponent; ++i) {
    if (r > cap / base) return cap + 1;
    r *= base;
  }
  return r;
}

}  // namespace ctpo
