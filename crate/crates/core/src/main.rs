use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let run = transserial::cli::run(std::env::args_os());
    print!("{}", run.stdout);
    let _ = std::io::stdout().flush();
    eprint!("{}", run.stderr);
    ExitCode::from(run.code as u8)
}
