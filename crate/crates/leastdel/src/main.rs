fn main() {
    std::process::exit(leastdel::cli::run());
}
