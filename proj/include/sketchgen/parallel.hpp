#pragma once

namespace sketchgen::kernels {

// Runtime switch between the OpenMP kernels and serial execution of the same
// code paths. Parallel loops only ever partition independent output elements,
// so results are identical either way; the switch exists for the equivalence
// tests and the benchmarks.
void set_parallel(bool enabled);
bool parallel_enabled();
int max_threads();

} // namespace sketchgen::kernels
