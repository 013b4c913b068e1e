fn main() {
    std::process::exit(debias::run(std::env::args_os()));
}
