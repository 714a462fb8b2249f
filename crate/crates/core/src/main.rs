fn main() -> std::process::ExitCode {
    she_mfc::cli::run(std::env::args_os())
}
