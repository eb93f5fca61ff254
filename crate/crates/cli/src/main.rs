// SPDX-License-Identifier: MIT OR Apache-2.0

fn main() {
    std::process::exit(patchlab_cli::main_with(std::env::args_os()));
}
