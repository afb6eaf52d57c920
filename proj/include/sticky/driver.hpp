#pragma once

#include <span>

#include "sticky/gateway.hpp"
#include "sticky/sim.hpp"
#include "sticky/workload.hpp"

namespace sticky {

// Replays `trace` against a running gateway in wall-clock time and
// assembles the same report the simulator produces. A session's next turn
// is sent at max(its trace arrival, previous turn done); a turn that comes
// back node_error is retried once. Throws Error when the gateway is
// unreachable.
SimResult drive(std::span<const TurnRequest> trace, const Scenario& scenario,
                const HostPort& gateway);

}  // namespace sticky
