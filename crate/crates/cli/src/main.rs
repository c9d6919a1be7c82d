fn main() {
    env_logger::init();
    std::process::exit(relsyn_cli::run(std::env::args_os()));
}
