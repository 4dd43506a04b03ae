fn main() {
    std::process::exit(queue_monitor::cli::main_with_args(std::env::args_os()));
}
