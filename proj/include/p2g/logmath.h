// p2g/logmath.h

// Copyright 2026  The p2g Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef P2G_LOGMATH_H_
#define P2G_LOGMATH_H_

#include <cmath>
#include <span>

namespace p2g {

// All probability arithmetic is done in natural-log domain. Impossible events
// carry an explicit finite sentinel; -inf never enters arithmetic, so sums of
// impossible terms stay NaN-free.
constexpr double kLogZero = -1e30;

// Anything at or below this is treated as an impossible event.
constexpr double kLogZeroBound = -1e29;

inline bool log_is_zero(double logp) { return logp <= kLogZeroBound; }

// log(exp(a) + exp(b)), stable, sentinel-aware.
inline double log_add(double a, double b) {
  if (log_is_zero(a)) return b;
  if (log_is_zero(b)) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

inline double log_sum_exp(std::span<const double> logps) {
  double acc = kLogZero;
  for (double lp : logps) acc = log_add(acc, lp);
  return acc;
}

}  // namespace p2g

#endif  // P2G_LOGMATH_H_
