fn main() -> std::process::ExitCode {
    pulsenet_cli::main_with_args(std::env::args_os())
}
