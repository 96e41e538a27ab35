#pragma once

namespace uqkit {

// Selects between the OpenMP kernel and its serial reference. Both paths
// produce bit-identical results; the serial one is kept for tests and
// benchmarks.
enum class Exec { serial, parallel };

// Applies UQKIT_THREADS (if set and positive) to the OpenMP runtime.
// Returns the resulting maximum thread count.
int configure_threads_from_env();

int max_threads();

}  // namespace uqkit
