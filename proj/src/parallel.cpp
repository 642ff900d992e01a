#include "fctl/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

#include "fctl/error.hpp"

namespace fctl {

int num_threads() { return omp_get_max_threads(); }

void set_num_threads(int n) {
  if (n < 1) throw ArgumentError("thread count must be >= 1");
  omp_set_num_threads(n);
}

int configure_threads_from_env() {
  int n = 1;
  if (const char* env = std::getenv("FCTL_THREADS"); env && *env) {
    try {
      n = std::stoi(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("FCTL_THREADS is not an integer: ") + env);
    }
  }
  set_num_threads(n);
  return n;
}

}  // namespace fctl
