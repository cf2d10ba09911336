fn main() {
    std::process::exit(radar_motion::cli::main_with_args(std::env::args_os()));
}
