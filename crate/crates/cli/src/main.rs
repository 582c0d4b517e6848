fn main() {
    if let Err(e) = noncanon_cli::configure_threads() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(noncanon_cli::args::main_with(&argv));
}
