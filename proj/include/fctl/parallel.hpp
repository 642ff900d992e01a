#pragma once

namespace fctl {

/// Worker count used by kernels and patch-parallel inference.
int num_threads();
void set_num_threads(int n);

/// Applies FCTL_THREADS from the environment (default 1). Returns the count.
int configure_threads_from_env();

}  // namespace fctl
