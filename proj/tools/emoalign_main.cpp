// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "emoalign/cli.hpp"

int main(int argc, char** argv) { return emoalign::run_cli(argc, argv); }
