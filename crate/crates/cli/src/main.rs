fn main() {
    std::process::exit(eegfist_cli::app::main_with_args(std::env::args_os()));
}
