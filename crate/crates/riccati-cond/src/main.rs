fn main() {
    std::process::exit(riccati_cond::cli::run());
}
