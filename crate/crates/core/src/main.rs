fn main() -> std::process::ExitCode {
    codesem::cli::main()
}
