#pragma once

namespace odn {

/// Keeps large freed blocks inside the process. Training and inference
/// allocate the same activation sizes over and over; returning them to the
/// kernel each time turns into page-fault time that rivals the arithmetic.
void configure_allocator();

}  // namespace odn
