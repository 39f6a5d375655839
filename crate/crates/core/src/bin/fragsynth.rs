fn main() {
    std::process::exit(fragsynth::cli::main_with_args(std::env::args_os()));
}
