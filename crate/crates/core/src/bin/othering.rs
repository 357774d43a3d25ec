use std::io;

fn main() {
    let stdin = io::stdin();
    let code = othering::cli::run_with_io(
        std::env::args_os(),
        &mut stdin.lock(),
        &mut io::stdout(),
        &mut io::stderr(),
    );
    std::process::exit(code);
}
