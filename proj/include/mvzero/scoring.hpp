#pragma once

// Similarity logits, softmax and Shannon entropy for a single view.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <vector>

#include "mvzero/embedding_io.hpp"
#include "mvzero/error.hpp"

namespace mvzero {

/// Logit scale applied to cosine similarities unless configured otherwise.
inline constexpr double kDefaultTemperature = 100.0;

struct LogitsVector {
    std::vector<double> values;
    double temperature = kDefaultTemperature;

    std::size_t size() const noexcept { return values.size(); }
    bool operator==(const LogitsVector&) const = default;
};

struct ProbabilityVector {
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
    bool operator==(const ProbabilityVector&) const = default;
};

template <std::floating_point A, std::floating_point B>
double dot(std::span<const A> a, std::span<const B> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

/// Index of the largest value; the lowest index wins exact ties.
template <std::floating_point T>
std::size_t argmax(std::span<const T> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

inline std::size_t argmax(const LogitsVector& l) { return argmax(std::span<const double>(l.values)); }

inline void check_temperature(double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw Error(ErrorCode::NonPositiveTemperature, "temperature must be positive, got " +
                                                           std::to_string(temperature));
    }
}

/// values[j] = temperature * <view, prompts.row(j)>.
template <std::floating_point T>
LogitsVector compute_logits(std::span<const T> view, const EmbeddingMatrix& prompts, double temperature) {
    check_temperature(temperature);
    if (view.size() != prompts.cols()) {
        throw Error(ErrorCode::DimMismatch, "view has dim " + std::to_string(view.size()) +
                                                ", prompts have dim " + std::to_string(prompts.cols()));
    }
    LogitsVector out{std::vector<double>(prompts.rows()), temperature};
    for (std::size_t j = 0; j < prompts.rows(); ++j) {
        out.values[j] = temperature * dot(view, prompts.row(j));
    }
    return out;
}

inline ProbabilityVector softmax(std::span<const double> logits) {
    ProbabilityVector p{std::vector<double>(logits.size())};
    if (logits.empty()) return p;
    const double peak = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        p.values[j] = std::exp(logits[j] - peak);
        total += p.values[j];
    }
    for (double& v : p.values) v /= total;
    return p;
}

inline ProbabilityVector softmax(const LogitsVector& logits) { return softmax(std::span<const double>(logits.values)); }

/// -sum p log2 p in bits, with 0 log 0 = 0.
inline double entropy_bits(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log2(v);
    }
    return std::max(h, 0.0);
}

inline double entropy_bits(const ProbabilityVector& p) { return entropy_bits(std::span<const double>(p.values)); }

template <std::floating_point T>
double view_entropy(std::span<const T> view, const EmbeddingMatrix& prompts, double temperature) {
    return entropy_bits(softmax(compute_logits(view, prompts, temperature)));
}

}  // namespace mvzero
