fn main() {
    std::process::exit(itm_cli::run(std::env::args_os()));
}
