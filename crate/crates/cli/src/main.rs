fn main() {
    env_logger::init();
    std::process::exit(taskalloc_cli::cli::run(std::env::args_os()));
}
