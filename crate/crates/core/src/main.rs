fn main() -> std::process::ExitCode {
    semgp::cli::main()
}
