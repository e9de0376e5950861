use clap::Parser;

fn main() {
    if let Err(e) = ipt_cli::run(ipt_cli::Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
