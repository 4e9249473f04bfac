fn main() {
    std::process::exit(markov_sse::cli::main_with_args(std::env::args_os()));
}
