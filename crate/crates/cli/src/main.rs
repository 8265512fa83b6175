fn main() {
    std::process::exit(waiid_cli::run(std::env::args_os()));
}
