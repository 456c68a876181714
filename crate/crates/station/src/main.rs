fn main() -> std::process::ExitCode {
    edgeform_station::cli::main()
}
