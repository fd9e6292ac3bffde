fn main() {
    std::process::exit(cfmorph::cli::run(std::env::args_os()));
}
