fn main() {
    let mut out = std::io::stdout().lock();
    std::process::exit(zoomnet::cli::main_with_args(std::env::args_os(), &mut out));
}
