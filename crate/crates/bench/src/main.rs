fn main() {
    std::process::exit(augmi_bench::cli::run(std::env::args_os()));
}
