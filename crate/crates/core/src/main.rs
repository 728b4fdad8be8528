use clap::Parser;

use ptisabb::cli::{self, Cli, Command};

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => cli::cmd_generate(args),
        Command::Solve(args) => cli::cmd_solve(args),
        Command::Experiment(args) => cli::cmd_experiment(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}
