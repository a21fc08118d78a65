fn main() {
    std::process::exit(slu_mix::expcli::cli(std::env::args_os()));
}
