fn main() {
    std::process::exit(roadlift::cli::run(std::env::args_os()));
}
