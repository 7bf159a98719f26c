use std::io;

fn main() {
    let threads = std::env::var(relay_eh::cli::THREADS_ENV).ok();
    let code = relay_eh::cli::run(
        std::env::args_os(),
        threads,
        &mut io::stdout().lock(),
        &mut io::stderr().lock(),
    );
    std::process::exit(code);
}
