#pragma once

namespace spectranet {

/// One-time process-wide malloc tuning for the multi-megabyte tensors the
/// iteration loops allocate. Idempotent; called by the hot entry points.
void tune_allocator();

}  // namespace spectranet
