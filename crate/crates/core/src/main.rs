fn main() {
    let code = imv_align::cli::run(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
