#pragma once

namespace evetac::cli {

// Entry point of the evetac tool; returns the process exit code
// (0 success, 2 usage or input schema error, 1 internal failure).
int run(int argc, const char* const* argv);

} // namespace evetac::cli
