fn main() {
    std::process::exit(genrl_cli::run(std::env::args_os()));
}
