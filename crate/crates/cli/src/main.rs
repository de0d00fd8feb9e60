fn main() {
    std::process::exit(weakfactor_cli::run_cli(std::env::args_os()));
}
