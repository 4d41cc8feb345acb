fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SUPERQ_LOG", "warn")).init();
    std::process::exit(superq::cli::run(std::env::args_os()));
}
