fn main() {
    std::process::exit(sdde_lift::cli::main_with(std::env::args_os()));
}
