use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = afm_forge_cli::configure_threads() {
        eprintln!("{e}");
        std::process::exit(afm_forge_cli::EXIT_INPUT);
    }
    let outcome = afm_forge_cli::run(afm_forge_cli::Cli::parse());
    for m in &outcome.messages {
        if outcome.code == 0 {
            println!("{m}");
        } else {
            eprintln!("{m}");
        }
    }
    std::process::exit(outcome.code);
}
