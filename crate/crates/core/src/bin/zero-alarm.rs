fn main() {
    std::process::exit(zero_alarm::cli::run(std::env::args_os()));
}
