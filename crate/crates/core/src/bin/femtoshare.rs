fn main() -> std::process::ExitCode {
    femtoshare::cli::main()
}
