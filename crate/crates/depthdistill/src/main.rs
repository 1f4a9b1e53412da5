fn main() {
    std::process::exit(depthdistill::cli::run());
}
