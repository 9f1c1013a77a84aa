fn main() {
    std::process::exit(valuelens_cli::run());
}
