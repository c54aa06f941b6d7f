// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "macaw/cli.hpp"

int main(int argc, char** argv) { return macaw::cli::dispatch(argc, argv, std::cout, std::cerr); }
