fn main() {
    std::process::exit(twoway_aoi::cli::run(std::env::args_os()));
}
