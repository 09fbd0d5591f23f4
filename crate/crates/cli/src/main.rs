fn main() {
    if let Err(err) = homax_cli::run() {
        eprintln!("error: {err:#}");
        std::process::exit(homax_cli::exit_code_for(&err));
    }
}
