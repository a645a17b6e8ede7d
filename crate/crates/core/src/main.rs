fn main() -> std::process::ExitCode {
    retarget_core::cli::main()
}
