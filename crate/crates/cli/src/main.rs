fn main() -> std::process::ExitCode {
    curvgame::main_with_args(std::env::args_os())
}
