use clap::Parser;

fn main() {
    let cli = nodalflow_cli::Cli::parse();
    std::process::exit(nodalflow_cli::run(cli));
}
