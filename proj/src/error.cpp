#include "cfglearn/error.hpp"

namespace cfglearn {

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage:
      return 1;
    case ErrorKind::data:
      return 2;
    case ErrorKind::numerical:
      return 3;
  }
  return 2;
}

}  // namespace cfglearn
