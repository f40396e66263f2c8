fn main() {
    std::process::exit(fluxiso::cli::main(std::env::args_os()));
}
