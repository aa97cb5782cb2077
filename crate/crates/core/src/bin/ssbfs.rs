fn main() -> std::process::ExitCode {
    ssbfs::cli::main()
}
