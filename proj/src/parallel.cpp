#include "rlad/parallel.hpp"

namespace rlad {

std::atomic<bool>& cancellation_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

}  // namespace rlad
