fn main() {
    std::process::exit(branchfit::cli::run(std::env::args_os()));
}
