fn main() -> std::process::ExitCode {
    kgic_cli::main_entry()
}
