fn main() {
    std::process::exit(renewalq::cli::run());
}
