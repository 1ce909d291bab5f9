fn main() {
    std::process::exit(textnav::cli::main_from(std::env::args_os()));
}
