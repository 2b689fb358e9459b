use clap::Parser;

fn main() {
    // clap exits with 2 on usage errors
    let cli = ncpiv_cli::Cli::parse();
    std::process::exit(ncpiv_cli::run(cli));
}
