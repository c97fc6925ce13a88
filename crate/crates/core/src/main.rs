fn main() {
    std::process::exit(taskfair::harness::cli::cli_dispatch(std::env::args_os()));
}
