fn main() {
    std::process::exit(uavnav_harness::run_cli(std::env::args_os()));
}
