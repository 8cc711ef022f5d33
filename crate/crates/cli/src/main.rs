fn main() {
    std::process::exit(ma1max_cli::run_main(std::env::args_os()));
}
