fn main() {
    std::process::exit(contkd::cli::run(std::env::args_os()));
}
