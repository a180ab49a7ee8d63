fn main() {
    std::process::exit(transatt::cli::run(std::env::args_os()));
}
