fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CBRW_LOG", "warn")).init();
    std::process::exit(cbrw_cli::run_from(std::env::args_os()));
}
