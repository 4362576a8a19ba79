fn main() -> std::process::ExitCode {
    resfpn::cli::run(std::env::args_os())
}
