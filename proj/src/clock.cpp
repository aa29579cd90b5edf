#include "ranids/clock.hpp"

namespace ranids {

const Clock& steady_clock() {
  static const SteadyClock clock;
  return clock;
}

} // namespace ranids
