#include "ferkd/error.hpp"

namespace ferkd {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::empty_input: return "empty_input";
    case ErrorKind::inconsistency: return "inconsistency";
    case ErrorKind::shape: return "shape";
    case ErrorKind::data: return "data";
    case ErrorKind::state: return "state";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::alignment: return "alignment";
    case ErrorKind::io: return "io";
    case ErrorKind::bad_magic: return "bad_magic";
    case ErrorKind::bad_version: return "bad_version";
    case ErrorKind::truncated: return "truncated";
    case ErrorKind::invariant: return "invariant";
    case ErrorKind::protocol: return "protocol";
  }
  return "unknown";
}

}  // namespace ferkd
