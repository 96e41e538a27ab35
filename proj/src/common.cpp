#include "uqkit/error.hpp"
#include "uqkit/parallel.hpp"
#include "uqkit/random.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace uqkit {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::UnparseableNumeric: return "UnparseableNumeric";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::CholeskyFailure: return "CholeskyFailure";
        case ErrorCode::NonFiniteObjective: return "NonFiniteObjective";
        case ErrorCode::TooManyFeatures: return "TooManyFeatures";
        case ErrorCode::MissingRawBounds: return "MissingRawBounds";
        case ErrorCode::EmptyIntersection: return "EmptyIntersection";
        case ErrorCode::FeatureMismatch: return "FeatureMismatch";
        case ErrorCode::MismatchedPartitions: return "MismatchedPartitions";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::ParseError: return "ParseError";
    }
    return "Unknown";
}

std::vector<int> sample_without_replacement(Rng& rng, int n, int k) {
    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    // partial Fisher-Yates
    for (int i = 0; i < k; ++i) {
        const auto j = i + static_cast<int>(rng.index(static_cast<std::size_t>(n - i)));
        std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
    }
    all.resize(static_cast<std::size_t>(k));
    std::sort(all.begin(), all.end());
    return all;
}

int configure_threads_from_env() {
#ifdef _OPENMP
    if (const char* env = std::getenv("UQKIT_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) omp_set_num_threads(n);
    }
#endif
    return max_threads();
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace uqkit
