#pragma once

namespace rffkit {

// Full command-line surface: synth | pairs | train | eval | sweep-snr | osr.
// Returns the process exit code: 0 success, 2 validation error, 3 data
// error, 4 numeric error.
int run_cli(int argc, const char* const* argv);

}  // namespace rffkit
