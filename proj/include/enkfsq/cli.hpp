#pragma once

#include <iosfwd>

namespace enkfsq::cli {

/// Parses argv, runs one harness operation and writes its CSVs. Exit status:
/// 0 success, 1 usage or configuration error, 2 runtime error or divergence.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace enkfsq::cli
