fn main() {
    std::process::exit(lowrank_harness::cli::main_with(std::env::args_os()));
}
