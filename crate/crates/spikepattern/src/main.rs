fn main() {
    std::process::exit(spikepattern::cli_main(std::env::args_os()));
}
