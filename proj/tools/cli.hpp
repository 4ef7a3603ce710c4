#pragma once

namespace objcomp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitOrdering = 3;
inline constexpr int kExitRuntime = 4;

int run(int argc, char** argv);

}  // namespace objcomp::cli
