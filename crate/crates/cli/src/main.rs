use clap::Parser;
use session_planner_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
        }
        Err(err) => {
            eprintln!("{}", err.record());
            std::process::exit(err.exit_code());
        }
    }
}
