use clap::Parser;

use linchk::cli::{run, Cli};

fn main() {
    // Die quietly when stdout is a closed pipe (e.g. piped into `head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(run(&Cli::parse()));
}
