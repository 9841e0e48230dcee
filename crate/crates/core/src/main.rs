fn main() {
    std::process::exit(smmi::cli::run(std::env::args_os()));
}
