fn main() {
    std::process::exit(partition_mcmc::cli::main_with_args(std::env::args_os()));
}
