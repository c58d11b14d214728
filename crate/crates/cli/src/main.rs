fn main() {
    std::process::exit(basinscope_cli::run(std::env::args_os()));
}
