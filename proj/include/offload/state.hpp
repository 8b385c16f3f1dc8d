#pragma once

namespace offload {

/// Controller observation for the content being disseminated.
struct SystemState {
  double x1 = 0.0;  // fraction of interested nodes holding the content
  double x2 = 0.0;  // seeds used so far over interested nodes (x2 <= x1)
  double x3 = 1.0;  // fraction of time left before the panic zone

  friend bool operator==(const SystemState&, const SystemState&) = default;
};

}  // namespace offload
