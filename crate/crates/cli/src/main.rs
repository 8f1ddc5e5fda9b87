fn main() {
    hille_atlas_cli::configure_threads();
    let code = hille_atlas_cli::run(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
