fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(synergos::cli::LOG_ENV, "warn")).init();
    std::process::exit(synergos::cli::main_with(std::env::args_os()));
}
