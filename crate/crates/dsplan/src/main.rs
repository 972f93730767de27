use dsplan::cli;

fn main() {
    std::process::exit(cli::run_cli(std::env::args_os()));
}
