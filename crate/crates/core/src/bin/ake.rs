fn main() {
    std::process::exit(ake_gnn::cli::run_cli(std::env::args_os()));
}
