use clap::Parser;

fn main() -> std::process::ExitCode {
    absa_cli::main_with(absa_cli::Cli::parse())
}
