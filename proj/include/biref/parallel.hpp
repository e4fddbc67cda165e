#pragma once

namespace biref {

/// Applies the BIREF_THREADS environment variable (0 or unset = runtime default).
void configure_threads_from_env();

void set_threads(int n);
int max_threads();

}  // namespace biref
