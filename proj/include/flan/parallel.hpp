#pragma once

// Thin parallel-for layer used by the batch kernels (gradient accumulation,
// corpus encoding, pairwise distances).
//
// Every parallel kernel in this codebase has a serial twin; tests assert the
// two produce bit-identical results.  Determinism rule: loop bodies write
// only to slot `i` of preallocated output storage, and any reduction over
// results happens afterwards in ascending index order.  That makes output
// independent of thread count and schedule.

#include <functional>

namespace flan {

// Number of worker threads: FLAN_THREADS environment variable when set to a
// positive integer (capped at the OpenMP maximum), otherwise the OpenMP
// default; 1 when built without OpenMP.
int worker_count();

// Runs body(0..n-1) across worker_count() threads.  The first exception
// thrown by any iteration is rethrown on the calling thread.
void parallel_for(int n, const std::function<void(int)>& body);

// Serial reference twin: runs body(0..n-1) on the calling thread.
void serial_for(int n, const std::function<void(int)>& body);

}  // namespace flan
