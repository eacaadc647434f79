fn main() {
    std::process::exit(vpr_cli::run(std::env::args_os()));
}
