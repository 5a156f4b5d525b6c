fn main() {
    std::process::exit(kexfam::cli::run());
}
