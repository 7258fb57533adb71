#pragma once
// Command-line front end. Returns the process exit code: 0 on success,
// 1 on runtime failure (I/O, training blow-up, failed verification),
// 2 on bad usage or bad configuration.

namespace acsac {

int cli_dispatch(int argc, const char* const* argv);

}  // namespace acsac
