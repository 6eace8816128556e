#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace soclab {

/// Max-shifted log-sum-exp. Finite for any finite input.
template <class Real>
Real logsumexp(std::span<const Real> x) {
    if (x.empty()) return -std::numeric_limits<Real>::infinity();
    const Real m = *std::ranges::max_element(x);
    Real acc = 0;
    for (const Real v : x) acc += std::exp(v - m);
    return m + std::log(acc);
}

template <class Real>
Real logsumexp(const std::vector<Real>& x) { return logsumexp(std::span<const Real>(x)); }

/// log softmax as x - logsumexp(x); never the log of a rounded probability.
template <class Real>
std::vector<Real> log_softmax(std::span<const Real> x) {
    const Real lse = logsumexp(x);
    std::vector<Real> out(x.size());
    std::ranges::transform(x, out.begin(), [lse](Real v) { return v - lse; });
    return out;
}

template <class Real>
std::vector<Real> log_softmax(const std::vector<Real>& x) { return log_softmax(std::span<const Real>(x)); }

template <class Real>
std::vector<Real> softmax(std::span<const Real> x) {
    std::vector<Real> out(x.size());
    if (x.empty()) return out;
    const Real m = *std::ranges::max_element(x);
    Real acc = 0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += (out[i] = std::exp(x[i] - m));
    for (auto& v : out) v /= acc;
    return out;
}

template <class Real>
std::vector<Real> softmax(const std::vector<Real>& x) { return softmax(std::span<const Real>(x)); }

/// Shannon entropy in nats, with 0 log 0 = 0.
template <class Real>
Real entropy(std::span<const Real> p) {
    Real h = 0;
    for (const Real v : p)
        if (v > 0) h -= v * std::log(v);
    return h;
}

template <class Real>
Real entropy(const std::vector<Real>& p) { return entropy(std::span<const Real>(p)); }

/// Index of the largest entry; ties go to the smallest index.
template <class Real>
std::size_t argmax(std::span<const Real> x) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < x.size(); ++i)
        if (x[i] > x[best]) best = i;
    return best;
}

template <class Real>
std::size_t argmax(const std::vector<Real>& x) { return argmax(std::span<const Real>(x)); }

} // namespace soclab
