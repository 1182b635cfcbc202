fn main() {
    std::process::exit(seqmargin::cli_main(std::env::args_os()));
}
