fn main() {
    std::process::exit(bess_pfc::cli::run(std::env::args_os()));
}
