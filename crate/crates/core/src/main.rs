fn main() {
    std::process::exit(bandred::bench::main_with(std::env::args_os()));
}
