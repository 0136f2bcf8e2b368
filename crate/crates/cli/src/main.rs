use clap::Parser;

fn main() {
    let cli = tse_cli::Cli::parse();
    match tse_cli::run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
