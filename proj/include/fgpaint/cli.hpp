// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fgp {

// Exit codes: 0 success, 2 usage errors (bad flags, missing files), 1 any
// other failure.
inline constexpr int kExitUsage = 2;

// `args` excludes the program name. Subcommands: gen-data, train, sample,
// eval, dump-attn.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fgp
