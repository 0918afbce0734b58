fn main() {
    std::process::exit(bhme::cli::run(std::env::args_os()));
}
