#pragma once

#include <exception>

namespace qdf::detail {

// Exceptions must not escape an omp parallel region; the first one thrown
// by any worker is captured here and rethrown by the caller.
class OmpErrorCapture {
 public:
  void capture() {
#pragma omp critical(qdf_omp_error_capture)
    {
      if (!err_) err_ = std::current_exception();
    }
  }
  void rethrow_if_set() const {
    if (err_) std::rethrow_exception(err_);
  }
  explicit operator bool() const { return bool(err_); }

 private:
  std::exception_ptr err_;
};

}  // namespace qdf::detail
