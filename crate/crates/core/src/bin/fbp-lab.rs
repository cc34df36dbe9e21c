fn main() {
    std::process::exit(fbp_lab::cli::main_with(std::env::args_os()));
}
