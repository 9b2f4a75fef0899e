fn main() {
    if let Err(e) = ferrocirc_cli::run_from(std::env::args_os()) {
        eprintln!("ferrocirc: {e}");
        std::process::exit(e.exit_code());
    }
}
