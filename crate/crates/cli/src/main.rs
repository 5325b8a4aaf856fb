use std::io::Write;

fn main() {
    match vtrack_cli::run(std::env::args_os()) {
        Ok(out) => {
            print!("{out}");
            std::io::stdout().flush().ok();
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
