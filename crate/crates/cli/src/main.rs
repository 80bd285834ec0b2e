fn main() {
    std::process::exit(earshot_cli::run(std::env::args_os()));
}
