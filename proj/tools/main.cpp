// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "fgpaint/cli.hpp"

int main(int argc, char** argv) {
  return fgp::cli_main(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
