fn main() {
    std::process::exit(dpt_core::cli::run());
}
