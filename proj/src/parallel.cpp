#include "flan/parallel.hpp"

#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace flan {

int worker_count() {
#ifdef _OPENMP
    int n = omp_get_max_threads();
    if (const char* env = std::getenv("FLAN_THREADS")) {
        try {
            const int requested = std::stoi(env);
            if (requested > 0 && requested < n) n = requested;
            if (requested > 0 && requested >= n) n = requested;
        } catch (const std::exception&) {
            // Unparseable value: fall back to the OpenMP default.
        }
    }
    return n;
#else
    return 1;
#endif
}

void serial_for(int n, const std::function<void(int)>& body) {
    for (int i = 0; i < n; ++i) body(i);
}

void parallel_for(int n, const std::function<void(int)>& body) {
#ifdef _OPENMP
    const int threads = worker_count();
    if (threads <= 1 || n <= 1) {
        serial_for(n, body);
        return;
    }
    std::exception_ptr first_error;
    std::mutex error_mutex;
#pragma omp parallel for schedule(static) num_threads(threads)
    for (int i = 0; i < n; ++i) {
        try {
            body(i);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);
#else
    serial_for(n, body);
#endif
}

}  // namespace flan
