use clap::Parser;

fn main() {
    let cli = ajsim::Cli::parse();
    let code = match ajsim::run(&cli, &mut std::io::stdout(), &mut std::io::stderr()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
