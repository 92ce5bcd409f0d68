// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "semalign/cli/commands.hpp"

int main(int argc, char** argv) { return semalign::cli::run_cli(argc, argv, std::cout, std::cerr); }
