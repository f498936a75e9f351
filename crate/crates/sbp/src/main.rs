fn main() {
    std::process::exit(sbp::cli::main(std::env::args_os()));
}
