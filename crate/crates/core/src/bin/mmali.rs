fn main() -> std::process::ExitCode {
    mmali::cli::main_with_args(std::env::args_os())
}
