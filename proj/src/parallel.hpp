#ifndef FLAIR_SRC_PARALLEL_HPP
#define FLAIR_SRC_PARALLEL_HPP

#include <exception>
#include <mutex>

#include "flair/numcore.hpp"

namespace flair::detail {

// OpenMP loop over [0, count). The first exception thrown by any iteration
// is rethrown on the calling thread once the loop has drained.
template <class Body>
void parallel_for(Index count, Body&& body) {
  std::exception_ptr error;
  std::mutex guard;
#pragma omp parallel for schedule(dynamic, 4)
  for (Index i = 0; i < count; ++i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(guard);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace flair::detail

#endif  // FLAIR_SRC_PARALLEL_HPP
